//! Library half of the operator CLI. The measurement harness lives here so
//! integration tests can drive it without shelling out to the binary.

pub mod bench;
