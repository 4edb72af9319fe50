use morph::codec::morph::{bits_to_symbols, morph_symbol, symbols_to_bits, MorphSymbol, SfSet};
use morph::codec::{cor_scores, ifo2_decode, ifo2_encode, ifo2_nearest_code, ostinato_decode, ostinato_encode, CorMode};
use morph::harness::{snr_threshold, wilson_interval, SerCurve, SerPoint};
use morph::phy::{dechirp_decode, dechirp_spectrum, gen_chirp, ChirpConfig, Sweep, DEFAULT_BW};
use morph::seed::derive_seed;
use proptest::prelude::*;

fn sf_set() -> impl Strategy<Value = SfSet> {
    prop::sample::select(SfSet::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clean_chirp_decodes_to_its_value(sf in 7u8..=12, raw in any::<u32>(), phase in 0.0..std::f64::consts::TAU) {
        let value = raw % (1 << sf);
        let mut sym = gen_chirp(&ChirpConfig::new(sf, DEFAULT_BW).unwrap().with_value(value).unwrap(), Sweep::Up).unwrap();
        sym.rotate(phase);
        let out = dechirp_decode(&sym, sf).unwrap();
        prop_assert_eq!(out.value, value);
        prop_assert!((out.peak_mag - (1u32 << sf) as f64).abs() < 1e-6 * (1u32 << sf) as f64);
    }

    #[test]
    fn dechirp_preserves_energy(sf in 7u8..=10, raw in any::<u32>()) {
        // unnormalised transform: Σ|X|² = N·Σ|x|²
        let sym = gen_chirp(&ChirpConfig::new(sf, DEFAULT_BW).unwrap().with_value(raw % (1 << sf)).unwrap(), Sweep::Up).unwrap();
        let spec = dechirp_spectrum(sym.samples(), sf).unwrap();
        let e_t = sym.energy();
        let e_f: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((e_f - e_t * (1u32 << sf) as f64).abs() < 1e-6 * e_f);
    }

    #[test]
    fn bits_symbols_round_trip(bits in prop::collection::vec(any::<bool>(), 0..64)) {
        let even = &bits[..bits.len() / 2 * 2];
        let syms = bits_to_symbols(even).unwrap();
        prop_assert!(syms.iter().all(|&s| s < 4));
        prop_assert_eq!(symbols_to_bits(&syms), even.to_vec());
    }

    #[test]
    fn every_morph_symbol_spans_the_same_window(set in sf_set(), v in 0u8..4) {
        let sym = morph_symbol(v, set, DEFAULT_BW).unwrap();
        let m = MorphSymbol::new(v, set).unwrap();
        prop_assert_eq!(sym.len(), 1usize << set.sf_max());
        prop_assert_eq!(m.sf, set.sf_min() + v);
        prop_assert_eq!(m.hop_period << m.sf, 1usize << set.sf_max());
    }

    #[test]
    fn cor_picks_the_sent_symbol_under_any_phase(set in sf_set(), v in 0u8..4, phase in 0.0..std::f64::consts::TAU, coherent in any::<bool>()) {
        let mut sym = morph_symbol(v, set, DEFAULT_BW).unwrap();
        sym.rotate(phase);
        let mode = if coherent { CorMode::Coherent } else { CorMode::Noncoherent };
        let scores = cor_scores(sym.samples(), set, mode).unwrap();
        let best = (0..4).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
        prop_assert_eq!(best, v as usize);
        prop_assert!((scores[v as usize] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ifo2_snaps_to_the_nearest_code(sf in 10u8..=12, raw in any::<u32>()) {
        let n = 1u32 << sf;
        let q = n / 4;
        let bin = raw % n;
        let expected = if bin % q == q / 2 {
            let k = bin / q;
            k.min((k + 1) % 4) as u8
        } else {
            (((bin + q / 2) / q) % 4) as u8
        };
        prop_assert_eq!(ifo2_nearest_code(bin, sf), expected);
    }

    #[test]
    fn ifo2_and_ostinato_round_trip(sf in 10u8..=12, v in 0u8..4, k in prop::sample::select(vec![2usize, 4, 8]), raw in 0u32..4096) {
        prop_assert_eq!(ifo2_decode(&ifo2_encode(v, sf, DEFAULT_BW).unwrap(), sf).unwrap(), v);
        let sym = ostinato_encode(raw, k, DEFAULT_BW).unwrap();
        prop_assert_eq!(sym.len(), k << 12);
        prop_assert_eq!(ostinato_decode(&sym, k).unwrap(), raw);
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(n in 1usize..5000, frac in 0.0..=1.0f64) {
        let k = ((n as f64) * frac).round() as usize;
        let (lo, hi) = wilson_interval(k, n, 1.96);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn threshold_meets_the_rule(sers in prop::collection::vec(0.0..0.05f64, 3..20)) {
        let curve = SerCurve {
            scheme: "x".into(),
            config: "y".into(),
            bw: DEFAULT_BW,
            data_rate_bps: 1.0,
            points: sers
                .iter()
                .enumerate()
                .map(|(i, s)| SerPoint::new(i as f64, 10_000, (s * 10_000.0).round() as usize))
                .collect(),
        };
        let target = 0.01;
        match snr_threshold(&curve, target) {
            Ok(r) => {
                let i = curve.points.iter().position(|p| p.snr_db == r.threshold_db).unwrap();
                prop_assert!(i > 0);
                prop_assert!(curve.points[i..].iter().all(|p| p.ser <= target));
                prop_assert!(curve.points[i - 1].ser > target);
            }
            Err(_) => {
                let all_pass = curve.points.iter().all(|p| p.ser <= target);
                let top_fails = curve.points.last().unwrap().ser > target;
                prop_assert!(all_pass || top_fails);
            }
        }
    }

    #[test]
    fn derived_seeds_depend_on_every_part(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        prop_assert_eq!(derive_seed(&[a, b, c]), derive_seed(&[a, b, c]));
        prop_assert_ne!(derive_seed(&[a, b, c]), derive_seed(&[a, b, c.wrapping_add(1)]));
        if a != b {
            prop_assert_ne!(derive_seed(&[a, b]), derive_seed(&[b, a]));
        }
    }
}
