use inq_core::io::{decode_layer, encode_layer, encoded_bits};
use inq_core::quant::QuantGrid;
use inq_core::Tensor;
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn round_trip(w: &Tensor, g: &QuantGrid) {
    let s = encode_layer(w, g).unwrap();
    let zeros = w.data().iter().filter(|&&v| v == 0.0).count();
    assert_eq!(s.bit_len, encoded_bits(zeros, w.len(), g.bits()));
    assert_eq!(s.bit_len, zeros + (w.len() - zeros) * g.bits() as usize);
    assert_eq!(s.bytes.len(), s.bit_len.div_ceil(8));
    let back = decode_layer(&s.bytes, g, w.len()).unwrap();
    assert!(back.bit_eq(w));
}

/// Every sequence of `len` levels, for small grids.
#[test]
fn exhaustive_small_grids() {
    for (b, max_len) in [(2u32, 6u32), (3, 4)] {
        let g = QuantGrid::new(b, -1).unwrap();
        let levels = g.levels();
        for len in 0..=max_len {
            let total = (levels.len() as u64).pow(len);
            for code in 0..total {
                let mut c = code;
                let data = (0..len)
                    .map(|_| {
                        let v = levels[(c % levels.len() as u64) as usize];
                        c /= levels.len() as u64;
                        v
                    })
                    .collect();
                round_trip(&Tensor::from_vec(data), &g);
            }
        }
    }
}

#[test]
fn random_five_bit_layer() {
    let g = QuantGrid::new(5, -1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let data: Vec<f64> = (0..10_000)
        .map(|_| *g.levels().choose(&mut rng).unwrap())
        .collect();
    round_trip(&Tensor::from_vec(data), &g);
}

#[test]
fn all_zero_layer_size() {
    let g = QuantGrid::new(5, 0).unwrap();
    for n in [1, 7, 8, 9, 100] {
        let s = encode_layer(&Tensor::zeros(&[n]), &g).unwrap();
        assert_eq!(s.bytes.len(), n.div_ceil(8));
        assert!(s.bytes.iter().take(n / 8).all(|&b| b == 0xff));
    }
}

proptest! {
    #[test]
    fn round_trip_any_grid(b in 2u32..=8, n1 in -12i32..=3, picks in prop::collection::vec(any::<prop::sample::Index>(), 0..300)) {
        let g = QuantGrid::new(b, n1).unwrap();
        let data = picks.iter().map(|i| *i.get(g.levels())).collect();
        round_trip(&Tensor::from_vec(data), &g);
    }

    #[test]
    fn truncation_is_detected(b in 2u32..=6, picks in prop::collection::vec(any::<prop::sample::Index>(), 1..50)) {
        let g = QuantGrid::new(b, 0).unwrap();
        let data: Vec<f64> = picks.iter().map(|i| *i.get(g.levels())).collect();
        let s = encode_layer(&Tensor::from_vec(data.clone()), &g).unwrap();
        let cut = &s.bytes[..s.bytes.len() - 1];
        // Dropping a byte must fail unless the padding alone absorbed it.
        if cut.len() * 8 < s.bit_len {
            prop_assert!(decode_layer(cut, &g, data.len()).is_err());
        }
    }
}
