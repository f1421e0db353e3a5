use proptest::prelude::*;

use ppm_attack::attacker::{
    hidden_zero_prob, most_probable_state, update_marginals, AttackerConfig, Attacker, Belief,
    SampleSet,
};
use ppm_attack::io::{read_transcript, TranscriptWriter};
use ppm_attack::ppm::{evaluate, hidden_unit_state, ppm_output, PpmConfig};
use ppm_attack::protocol::{generate_round, run_key_exchange, RoundRecord};
use ppm_attack::rng::stream;

fn bits(len: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..=1, len)
}

fn column_pair() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (1usize..=16).prop_flat_map(|n| (bits(n), bits(n)))
}

proptest! {
    #[test]
    fn hidden_unit_is_symmetric((x, w) in column_pair()) {
        prop_assert_eq!(hidden_unit_state(&x, &w).unwrap(), hidden_unit_state(&w, &x).unwrap());
    }

    #[test]
    fn hidden_unit_complement_invariant((x, w) in column_pair()) {
        let xc: Vec<u8> = x.iter().map(|b| b ^ 1).collect();
        let wc: Vec<u8> = w.iter().map(|b| b ^ 1).collect();
        prop_assert_eq!(hidden_unit_state(&x, &w).unwrap(), hidden_unit_state(&xc, &wc).unwrap());
    }

    #[test]
    fn tie_stays_inactive(half in 1usize..=8, seed in any::<u64>()) {
        // exactly N/2 mismatches
        let n = 2 * half;
        let x = vec![0u8; n];
        let mut w = vec![0u8; n];
        let mut order: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        for &i in &order[..half] {
            w[i] = 1;
        }
        prop_assert_eq!(hidden_unit_state(&x, &w).unwrap(), (half, 0));
    }

    #[test]
    fn parity_flips_with_one_hidden_state(mut h in prop::collection::vec(0u8..=1, 1..10), at in any::<prop::sample::Index>()) {
        let before = ppm_output(&h);
        let i = at.index(h.len());
        h[i] ^= 1;
        prop_assert_eq!(ppm_output(&h), before ^ 1);
    }

    #[test]
    fn evaluation_is_deterministic(n in 1usize..6, k in 1usize..4, seed in any::<u64>()) {
        let config = PpmConfig::new(n, k, 32).unwrap();
        let mut rng = stream(seed, 0);
        let round = generate_round(&config, &mut rng, 1, 1);
        let s = ppm_attack::protocol::init_party(&config, ppm_attack::protocol::PartyLabel::A, &mut rng);
        let e1 = evaluate(s.state(), &round, &config).unwrap();
        let e2 = evaluate(s.state(), &round, &config).unwrap();
        for j in 0..k {
            prop_assert_eq!(e1.scalar_fields[j], e1.vector_fields.column(j).map(usize::from).sum::<usize>());
        }
        prop_assert_eq!(e1, e2);
    }

    #[test]
    fn binomial_tail_is_monotone(n in 1usize..=64, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let plo = hidden_zero_prob(lo, n).unwrap();
        let phi = hidden_zero_prob(hi, n).unwrap();
        prop_assert!((0.0..=1.0).contains(&plo));
        prop_assert!(phi <= plo + 1e-12, "N={} tail({})={} tail({})={}", n, lo, plo, hi, phi);
    }

    #[test]
    fn threshold_survives_monotone_reparameterisation(
        probs in prop::collection::vec(0.0f64..=1.0, 1..40),
        gamma in 0.1f64..5.0,
    ) {
        // p -> 1/2 + sign(p - 1/2) |2p - 1|^γ / 2 keeps 1/2 fixed
        let warped: Vec<f64> = probs
            .iter()
            .map(|&p| 0.5 + 0.5 * (2.0 * p - 1.0).signum() * (2.0 * p - 1.0).abs().powf(gamma))
            .map(|p| if p.is_nan() { 0.5 } else { p.clamp(0.0, 1.0) })
            .collect();
        let a = most_probable_state(&Belief::from_probs(probs).unwrap());
        let b = most_probable_state(&Belief::from_probs(warped).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn update_touches_only_selected(seed in any::<u64>(), probs in prop::collection::vec(0.0f64..=1.0, 16)) {
        let config = PpmConfig::new(3, 2, 16).unwrap();
        let round = generate_round(&config, &mut stream(seed, 0), 1, 1);
        let indices = round.pi.distinct();
        let zero_counts: Vec<u32> = indices.iter().map(|&i| (i as u32 * 7 + seed as u32) % 11).collect();
        let samples = SampleSet { indices: indices.clone(), zero_counts, samples: 10, attempts: 10 };
        let mut belief = Belief::from_probs(probs.clone()).unwrap();
        // counts above the sample size are rejected by the belief invariant, so cap them
        let capped = SampleSet { zero_counts: samples.zero_counts.iter().map(|&c| c.min(10)).collect(), ..samples };
        update_marginals(&mut belief, &capped, &round.pi).unwrap();
        for i in 0..16 {
            if !indices.contains(&i) {
                prop_assert_eq!(belief.probs()[i], probs[i]);
            }
            prop_assert!((0.0..=1.0).contains(&belief.probs()[i]));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn belief_stays_in_unit_interval(seed in any::<u64>(), n in 1usize..5) {
        let config = PpmConfig::new(n, 2, 12).unwrap();
        let mut log: Vec<RoundRecord> = Vec::new();
        run_key_exchange(config, stream(seed, 0), 3, &mut log).unwrap();
        let mut att = Attacker::new(config, AttackerConfig::new(64, 2_000).unwrap()).unwrap();
        let mut rng = stream(seed, 1);
        for r in &log {
            let before = att.belief().clone();
            let update = att.process_round(r, &mut rng).unwrap();
            prop_assert!(att.belief().probs().iter().all(|p| (0.0..=1.0).contains(p)));
            if !update.transferred && update.resets == 0 {
                let selected = r.input.pi.distinct();
                for i in 0..12 {
                    if !selected.contains(&i) {
                        prop_assert_eq!(att.belief().probs()[i], before.probs()[i]);
                    }
                }
            }
        }
    }

    #[test]
    fn transcript_round_trips(seed in any::<u64>(), n in 1usize..5, k in 1usize..4) {
        let config = PpmConfig::new(n, k, 10).unwrap();
        let mut log: Vec<RoundRecord> = Vec::new();
        let mut w = TranscriptWriter::new(Vec::new(), &config).unwrap();
        run_key_exchange(config, stream(seed, 0), 2, &mut log).unwrap();
        for r in &log {
            ppm_attack::protocol::RoundObserver::observe(&mut w, r).unwrap();
        }
        let bytes = w.finish().unwrap();
        prop_assert_eq!(read_transcript(bytes.as_slice(), &config).unwrap(), log);
    }
}
