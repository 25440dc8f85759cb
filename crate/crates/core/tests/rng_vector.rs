//! First draws of the resampling stream, pinned against an independent
//! ChaCha8 block-function implementation.

use hfrscope::trend::rng::{replicate_rng, uniform_index, uniform_unit};
use rand::RngCore;

fn first_words(seed: u64, stream: u64) -> [u64; 4] {
    let mut rng = replicate_rng(seed, stream);
    [rng.next_u64(), rng.next_u64(), rng.next_u64(), rng.next_u64()]
}

#[test]
fn stream_words() {
    assert_eq!(first_words(0, 0), [0xd6405f892fef003e, 0xa1a5091fe8b85b7f, 0x3b7f9acec30e842c, 0x1e1a71ef88e11b18]);
    assert_eq!(first_words(42, 0), [0x59273471198fa887, 0x49238aa4169df72b, 0x7e54361f64fc90f6, 0x5e2e306a96cef6e2]);
    assert_eq!(first_words(42, 3), [0x74ee5ce446465e4e, 0xac05b87a3d4a0cbe, 0xdf2fbadf68c2703f, 0xf18205a74e005201]);
    assert_eq!(first_words(2020, 1000), [0xc6af9da8a2cacc1b, 0x27bf6b5935310fb0, 0xfbc11a7e780c0d25, 0x86034f76547a7798]);
}

#[test]
fn block_start_indices() {
    // 200 residuals, block 7: 194 window starts
    let mut rng = replicate_rng(42, 0);
    let got: Vec<u64> = (0..8).map(|_| uniform_index(&mut rng, 194)).collect();
    assert_eq!(got, [175, 23, 160, 18, 4, 131, 11, 129]);
}

#[test]
fn unit_draws() {
    let mut rng = replicate_rng(7, 2);
    let got: Vec<f64> = (0..3).map(|_| uniform_unit(&mut rng)).collect();
    assert_eq!(got, [0.010922764364190707, 0.1943919988985855, 0.9000449852272792]);
}
