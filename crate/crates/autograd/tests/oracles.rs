//! Forward values of each op against naive loop oracles.

use afe_autograd::{Tape, Tensor};
use afe_oracles::{self as oracle, SplitMix};

fn close(a: &[f32], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(&x, &y)| (x as f64 - y).abs() <= tol)
}

fn tensor(shape: &[usize], data: &[f64]) -> Tensor<f32> {
    Tensor::from_f64(shape, data).unwrap()
}

/// Rounds through f32 so the oracle sees exactly what the engine sees.
fn round32(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x as f32 as f64).collect()
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = SplitMix::new(1);
    let a = round32(rng.vec(12, -1.0, 1.0));
    let b = round32(rng.vec(20, -1.0, 1.0));
    let mut tape = Tape::new();
    let va = tape.constant(tensor(&[3, 4], &a));
    let vb = tape.constant(tensor(&[4, 5], &b));
    let y = tape.matmul(va, vb).unwrap();
    assert!(close(tape.value(y).data(), &oracle::matmul(&a, &b, 3, 4, 5), 1e-6));
}

#[test]
fn batched_matmul_broadcasts_left_operand() {
    let mut rng = SplitMix::new(2);
    let a = round32(rng.vec(6, -1.0, 1.0));
    let b = round32(rng.vec(3 * 3 * 4, -1.0, 1.0));
    let mut tape = Tape::new();
    let va = tape.constant(tensor(&[2, 3], &a));
    let vb = tape.constant(tensor(&[3, 3, 4], &b));
    let y = tape.matmul(va, vb).unwrap();
    assert_eq!(tape.shape(y), &[3, 2, 4]);
    let mut expected = Vec::new();
    for c in 0..3 {
        expected.extend(oracle::matmul(&a, &b[c * 12..(c + 1) * 12], 2, 3, 4));
    }
    assert!(close(tape.value(y).data(), &expected, 1e-6));
}

#[test]
fn broadcast_mul_matches_per_channel_loop() {
    let mut rng = SplitMix::new(3);
    let x = round32(rng.vec(12, -2.0, 2.0));
    let m = round32(rng.vec(4, -2.0, 2.0));
    let mut tape = Tape::new();
    let vx = tape.constant(tensor(&[3, 2, 2], &x));
    let vm = tape.constant(tensor(&[2, 2], &m));
    let y = tape.mul(vx, vm).unwrap();
    let mut expected = vec![0.0; 12];
    for c in 0..3 {
        for i in 0..4 {
            expected[c * 4 + i] = x[c * 4 + i] * m[i];
        }
    }
    assert!(close(tape.value(y).data(), &expected, 1e-6));
}

#[test]
fn conv2d_matches_six_loop_oracle() {
    let mut rng = SplitMix::new(4);
    for &(c_in, h, w, c_out, pad) in &[(3, 8, 8, 4, 1), (2, 7, 5, 3, 0), (1, 4, 6, 2, 2)] {
        let x = round32(rng.vec(c_in * h * w, -1.0, 1.0));
        let k = round32(rng.vec(c_out * c_in * 9, -1.0, 1.0));
        let b = round32(rng.vec(c_out, -1.0, 1.0));
        let mut tape = Tape::new();
        let vx = tape.constant(tensor(&[c_in, h, w], &x));
        let vk = tape.constant(tensor(&[c_out, c_in, 3, 3], &k));
        let vb = tape.constant(tensor(&[c_out], &b));
        let y = tape.conv2d(vx, vk, vb, 2, pad).unwrap();
        let (expected, ho, wo) = oracle::conv2d(&x, &k, &b, c_in, h, w, c_out, 3, 3, 2, pad);
        assert_eq!(tape.shape(y), &[c_out, ho, wo]);
        assert!(close(tape.value(y).data(), &expected, 1e-5));
    }
}

#[test]
fn maxpool_matches_loop_oracle() {
    let mut rng = SplitMix::new(5);
    let x = round32(rng.vec(2 * 8 * 8, -1.0, 1.0));
    let mut tape = Tape::new();
    let vx = tape.constant(tensor(&[2, 8, 8], &x));
    let y = tape.maxpool2d(vx).unwrap();
    assert!(close(tape.value(y).data(), &oracle::maxpool2d(&x, 2, 8, 8), 0.0));
}

#[test]
fn softmax_and_cross_entropy_match_oracles() {
    let mut rng = SplitMix::new(6);
    let z = round32(rng.vec(15, -5.0, 5.0));
    let mut tape = Tape::new();
    let vz = tape.constant(tensor(&[3, 5], &z));
    let s = tape.softmax_rows(vz).unwrap();
    assert!(close(tape.value(s).data(), &oracle::softmax_rows(&z, 5), 1e-6));
    let labels = [4, 0, 2];
    let l = tape.cross_entropy(vz, &labels).unwrap();
    let expected = oracle::cross_entropy(&z, &labels, 5);
    assert!((tape.value(l).item() as f64 - expected).abs() < 1e-5);
}

#[test]
fn sixty_four_bit_mode_is_tight() {
    let mut rng = SplitMix::new(7);
    let a = rng.vec(6 * 7, -1.0, 1.0);
    let b = rng.vec(7 * 3, -1.0, 1.0);
    let mut tape = Tape::<f64>::new();
    let va = tape.constant(Tensor::from_f64(&[6, 7], &a).unwrap());
    let vb = tape.constant(Tensor::from_f64(&[7, 3], &b).unwrap());
    let y = tape.matmul(va, vb).unwrap();
    let expected = oracle::matmul(&a, &b, 6, 7, 3);
    for (x, y) in tape.value(y).data().iter().zip(expected) {
        assert!((x - y).abs() < 1e-10);
    }
}
