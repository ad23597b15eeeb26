//! Acceptance checks for `markov-pinning` live in `tests/acceptance.rs`.
//! They sit in their own package so that a failing criterion is reported
//! after every other suite in a workspace test run.
