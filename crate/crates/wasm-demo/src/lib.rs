//! Browser bindings: simulate a session, then run the global test, a local
//! test at a chosen time, or an online replay. Results cross the boundary as
//! JSON strings.

use lomn_core::inference::{
    global_test, local_test, GlobalTestConfig, LocalCritical, LocalTestConfig, LocalVol, VolSource,
};
use lomn_core::online::{detect_online, DetectorConfig, OnlineVol};
use lomn_core::sim::{simulate_session, Jump, NoiseSpec, ObservationSet, SimConfig};
use lomn_core::spot_vol::SpotVolConfig;
use lomn_core::{GridTarget, QuoteSeries};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// One simulated session held on the Rust side.
#[wasm_bindgen]
pub struct Session {
    obs: ObservationSet,
}

#[derive(Serialize)]
struct EventView {
    time: f64,
    size: f64,
    direction: String,
    detected_at: f64,
}

fn vol_grid(series: &QuoteSeries) -> GridTarget {
    GridTarget::BlockCount(((series.len() - 1) / 30).max(2))
}

impl Session {
    pub fn create(n: usize, seed: u64, q: f64, jump: f64, jump_time: f64) -> Result<Session, String> {
        let config = SimConfig { n, seed, ..SimConfig::default() };
        let jump = (jump != 0.0).then_some(Jump { time: jump_time, size: jump });
        let obs = simulate_session(&config, &NoiseSpec::ar1(q), jump, 0).map_err(|e| e.to_string())?;
        Ok(Session { obs })
    }

    fn series(&self, side: &str) -> Result<&QuoteSeries, String> {
        match side {
            "ask" => Ok(&self.obs.ask),
            "bid" => Ok(&self.obs.bid),
            other => Err(format!("unknown side '{other}'")),
        }
    }

    pub fn global_json(&self, side: &str, alpha: f64) -> Result<String, String> {
        let series = self.series(side)?;
        let mut cfg = GlobalTestConfig::reference(series.len() - 1, alpha);
        cfg.vol = VolSource::estimate(vol_grid(series), SpotVolConfig::default());
        let mut report = global_test(series, &cfg).map_err(|e| e.to_string())?;
        report.standardized.clear();
        serde_json::to_string(&report).map_err(|e| e.to_string())
    }

    pub fn local_json(&self, side: &str, tau: f64, nh: usize, alpha: f64) -> Result<String, String> {
        let series = self.series(side)?;
        let cfg = LocalTestConfig {
            nh,
            vol: LocalVol::Estimate { grid: vol_grid(series), config: SpotVolConfig::default() },
            alpha,
            critical: LocalCritical::Asymptotic,
        };
        let report = local_test(series, tau, &cfg).map_err(|e| e.to_string())?;
        serde_json::to_string(&report).map_err(|e| e.to_string())
    }

    pub fn online_json(&self, side: &str, alpha: f64, blocks: usize) -> Result<String, String> {
        let series = self.series(side)?;
        let cfg = DetectorConfig::new(
            series.len() - 1,
            blocks,
            alpha,
            series.side(),
            OnlineVol::Estimate(SpotVolConfig::default()),
        );
        let events = detect_online(series, cfg).map_err(|e| e.to_string())?;
        let views: Vec<EventView> = events
            .iter()
            .map(|e| EventView {
                time: e.time,
                size: e.size,
                direction: format!("{:?}", e.direction).to_lowercase(),
                detected_at: e.interval.1,
            })
            .collect();
        serde_json::to_string(&views).map_err(|e| e.to_string())
    }
}

#[wasm_bindgen]
impl Session {
    /// Simulates `n` steps with AR(1) one-sided noise of level `q` and an
    /// optional jump of log size `jump` at session time `jump_time`.
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, seed: u32, q: f64, jump: f64, jump_time: f64) -> Result<Session, JsError> {
        Session::create(n, u64::from(seed), q, jump, jump_time).map_err(|e| JsError::new(&e))
    }

    /// Interleaved `[t0, v0, t1, v1, ...]` for `side` in `ask`, `bid`, `mid`,
    /// `efficient`.
    pub fn points(&self, side: &str) -> Result<Vec<f64>, JsError> {
        let (times, values): (Vec<f64>, Vec<f64>) = match side {
            "mid" => (self.obs.mid.times().to_vec(), self.obs.mid.values().to_vec()),
            "efficient" => {
                let n = self.obs.n() as f64;
                ((0..self.obs.x.len()).map(|i| i as f64 / n).collect(), self.obs.x.clone())
            }
            s => {
                let series = self.series(s).map_err(|e| JsError::new(&e))?;
                (series.times().to_vec(), series.values().to_vec())
            }
        };
        Ok(times.into_iter().zip(values).flat_map(|(t, v)| [t, v]).collect())
    }

    #[wasm_bindgen(js_name = globalTest)]
    pub fn global_test(&self, side: &str, alpha: f64) -> Result<String, JsError> {
        self.global_json(side, alpha).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = localTest)]
    pub fn local_test(&self, side: &str, tau: f64, nh: usize, alpha: f64) -> Result<String, JsError> {
        self.local_json(side, tau, nh, alpha).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = detectOnline)]
    pub fn detect_online(&self, side: &str, alpha: f64, blocks: usize) -> Result<String, JsError> {
        self.online_json(side, alpha, blocks).map_err(|e| JsError::new(&e))
    }
}
