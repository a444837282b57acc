mod common;

use std::collections::HashMap;

use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Geometric};
use tuckzip::corecodec::default_block_size;
use tuckzip::entropy::{
    ac_decode, ac_encode, decode_symbols, encode_symbols, rans_decode, rans_encode, rle_extract, rle_restore,
    BitReader, BitWriter, CoderKind, RansTable, RunLengthStream, FRAME_HEADER_LEN,
};

/// Run-length streams of every leading-bit plane-block of the corpus cores.
fn corpus_streams() -> Vec<(String, Vec<Vec<u32>>)> {
    common::corpus()
        .into_iter()
        .map(|(name, t)| {
            let q = common::quantized_core(&t, 1e-3);
            let bs = default_block_size(q.magnitudes.len());
            let streams = (0..64)
                .rev()
                .flat_map(|p| common::leading_bits(&q.magnitudes, p, bs))
                .filter(|bits| !bits.is_empty())
                .map(|bits| rle_extract(&bits).symbols)
                .collect();
            (name, streams)
        })
        .collect()
}

#[test]
fn rle_examples() {
    assert_eq!(rle_extract(&[false; 5]).symbols, vec![5]);
    let bits = [false, false, true, false, true];
    assert_eq!(rle_extract(&bits).symbols, vec![2, 1, 0]);
    assert_eq!(rle_restore(&RunLengthStream { symbols: vec![2, 1, 0] }, 5).unwrap(), bits);
    assert!(rle_restore(&RunLengthStream { symbols: vec![2, 1] }, 5).is_err());
    assert!(rle_restore(&RunLengthStream { symbols: vec![9] }, 5).is_err());
    assert!(rle_extract(&[]).symbols.is_empty());
}

#[test]
fn rle_random_columns() {
    let mut g = common::rng(1);
    for density in [0.001, 0.05, 0.5, 0.97] {
        let bits: Vec<bool> = (0..10_000).map(|_| g.random_bool(density)).collect();
        let s = rle_extract(&bits);
        assert_eq!(s.symbols.len(), bits.iter().filter(|&&b| b).count() + 1);
        assert_eq!(rle_restore(&s, bits.len()).unwrap(), bits);
    }
}

#[test]
fn coder_examples() {
    assert!(ac_encode(&[]).is_empty());
    assert_eq!(ac_decode(&[], 0).unwrap(), Vec::<u32>::new());
    assert!(ac_encode(&[7; 1000]).len() <= 32);
    let framed = encode_symbols(CoderKind::Arithmetic, &[]).unwrap();
    assert_eq!(framed.len(), FRAME_HEADER_LEN);

    let single = rans_encode(&[5; 10_000]).unwrap();
    let mut table = Vec::new();
    RansTable::from_symbols(&[5]).unwrap().serialize(&mut table);
    assert!(single.len() <= table.len() + 8, "{} bytes", single.len());
    assert_eq!(rans_decode(&single, 10_000).unwrap(), vec![5; 10_000]);
}

#[test]
fn corpus_blocks_roundtrip_with_both_coders() {
    for (name, streams) in corpus_streams() {
        assert!(!streams.is_empty(), "{name}");
        for s in &streams {
            for kind in [CoderKind::Arithmetic, CoderKind::Rans] {
                let bytes = encode_symbols(kind, s).unwrap();
                assert_eq!(decode_symbols(&bytes).unwrap(), (kind, s.clone()), "{name}");
            }
        }
    }
}

/// Total framed bytes of both coders over the corpus run-length streams.
fn paired_sizes() -> Vec<(String, usize, usize)> {
    corpus_streams()
        .into_iter()
        .map(|(name, streams)| {
            let ac: usize = streams.iter().map(|s| encode_symbols(CoderKind::Arithmetic, s).unwrap().len()).sum();
            let rans: usize = streams.iter().map(|s| encode_symbols(CoderKind::Rans, s).unwrap().len()).sum();
            (name, ac, rans)
        })
        .collect()
}

#[test]
fn rans_size_close_to_arithmetic() {
    for (name, ac, rans) in paired_sizes() {
        println!("{name:24} ac {ac:8} rans {rans:8} ratio {:.4}", rans as f64 / ac as f64);
        assert!(rans as f64 <= 1.01 * ac as f64, "{name}: rans {rans} vs ac {ac}");
    }
}

fn empirical_entropy_bits(s: &[u32]) -> f64 {
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for &v in s {
        *counts.entry(v).or_default() += 1;
    }
    let n = s.len() as f64;
    counts.values().map(|&c| c as f64 * -(c as f64 / n).log2()).sum()
}

#[test]
fn arithmetic_size_near_empirical_entropy() {
    for (p, seed) in [(0.3, 1), (0.05, 2), (0.6, 3)] {
        let geo = Geometric::new(p).unwrap();
        let mut g = common::rng(seed);
        let s: Vec<u32> = (0..200_000).map(|_| geo.sample(&mut g) as u32).collect();
        let h = empirical_entropy_bits(&s);
        let bits = 8.0 * ac_encode(&s).len() as f64;
        println!("p {p}: {bits} bits vs entropy {h:.0}");
        assert!(bits <= 1.05 * h && bits >= 0.95 * h, "p {p}: {bits} vs {h}");
        assert_eq!(ac_decode(&ac_encode(&s), s.len()).unwrap(), s);
    }
}

#[test]
fn million_symbol_roundtrip() {
    let mut g = common::rng(4);
    let s: Vec<u32> = (0..1_000_000)
        .map(|i| if i % 1000 == 0 { g.random() } else { g.random_range(0..300) })
        .collect();
    assert_eq!(ac_decode(&ac_encode(&s), s.len()).unwrap(), s);
    assert_eq!(rans_decode(&rans_encode(&s).unwrap(), s.len()).unwrap(), s);
}

#[test]
fn coders_are_deterministic() {
    let s: Vec<u32> = (0..5000u32).map(|i| i.wrapping_mul(2_654_435_761) % 97).collect();
    assert_eq!(ac_encode(&s), ac_encode(&s));
    assert_eq!(rans_encode(&s).unwrap(), rans_encode(&s).unwrap());
}

#[test]
fn corrupt_streams_are_rejected() {
    let s: Vec<u32> = (0..3000u32).map(|i| (i * 7) % 13).collect();
    for kind in [CoderKind::Arithmetic, CoderKind::Rans] {
        let bytes = encode_symbols(kind, &s).unwrap();
        assert!(decode_symbols(&bytes[..bytes.len() / 2]).is_err(), "{kind}");
        assert!(decode_symbols(&bytes[..3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = 9;
        assert!(decode_symbols(&bad).is_err());
    }
    assert!(rans_decode(&rans_encode(&s).unwrap()[..10], s.len()).is_err());
}

#[test]
fn bit_io_examples() {
    let mut w = BitWriter::new();
    for b in [true, false, true, true, false, false, true, false] {
        w.write_bit(b);
    }
    assert_eq!(w.finish(), vec![0b1011_0010]);
    assert!(BitWriter::new().finish().is_empty());
    let mut r = BitReader::new(&[]);
    assert!(r.read_bit().is_err());

    // interleaved trailing bits and signs
    let mut g = common::rng(5);
    let fields: Vec<(u64, u32)> = (0..500)
        .map(|_| {
            let n = g.random_range(1..=64u32);
            (g.random::<u64>() >> (64 - n), n)
        })
        .collect();
    let mut w = BitWriter::new();
    for &(v, n) in &fields {
        w.write_bits(v, n);
        w.write_bit(v & 1 == 0);
    }
    let bytes = w.finish();
    let mut r = BitReader::new(&bytes);
    for &(v, n) in &fields {
        assert_eq!(r.read_bits(n).unwrap(), v);
        assert_eq!(r.read_bit().unwrap(), v & 1 == 0);
    }
}

#[test]
fn coder_names() {
    assert_eq!("ac".parse::<CoderKind>().unwrap(), CoderKind::Arithmetic);
    assert_eq!("rans".parse::<CoderKind>().unwrap(), CoderKind::Rans);
    assert!("huffman".parse::<CoderKind>().is_err());
    assert_eq!(CoderKind::default(), CoderKind::Arithmetic);
}

proptest! {
    #![proptest_config(common::prop_config(64))]

    #[test]
    fn arbitrary_symbols_roundtrip(s in prop::collection::vec(any::<u32>(), 0..400)) {
        prop_assert_eq!(ac_decode(&ac_encode(&s), s.len()).unwrap(), s.clone());
        prop_assert_eq!(rans_decode(&rans_encode(&s).unwrap(), s.len()).unwrap(), s);
    }

    #[test]
    fn small_alphabet_roundtrip(s in prop::collection::vec(0u32..6, 0..3000)) {
        for kind in [CoderKind::Arithmetic, CoderKind::Rans] {
            let bytes = encode_symbols(kind, &s).unwrap();
            prop_assert_eq!(decode_symbols(&bytes).unwrap().1, s.clone());
        }
    }

    #[test]
    fn rle_roundtrip(bits in prop::collection::vec(any::<bool>(), 0..2000)) {
        let s = rle_extract(&bits);
        prop_assert_eq!(rle_restore(&s, bits.len()).unwrap(), bits);
    }
}
