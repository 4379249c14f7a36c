//! Holds the `acceptance` test target, which checks every acceptance
//! criterion end to end and prints one line per criterion.
