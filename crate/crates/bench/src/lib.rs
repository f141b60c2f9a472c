//! Benchmarks only; see benches/sim.rs.
