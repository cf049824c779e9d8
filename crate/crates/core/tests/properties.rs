//! Property-based invariants, fuzzed with proptest.
//!
//! These encode the contracts that must hold for *every* input, not just
//! the frozen examples: alignment, exact strategy-rule reconstruction from
//! the breakdown fields, monotonicity, collapse identities, search
//! maximality, decision dominance, and serialization round-trips.

mod common;

use common::Oracle;
use memplan_core::estimator::{
    align_to_page, estimate_peak, estimate_peak_adp, estimate_peak_single, estimate_peak_tp,
};
use memplan_core::ingest::{ArchitectureSpec, Manifest};
use memplan_core::planner::{decide, sweep_serial, PlannerOptions, Score};
use memplan_core::types::{
    ChunkConfig, HardwareProfile, ModelProfile, OperatorKind, OperatorRecord, PrecisionSpec,
    RunConfig, StrategyKind, StrategySpec,
};
use proptest::prelude::*;

prop_compose! {
    fn arb_profile()(
        emb_counts in prop::collection::vec(0u64..=1 << 20, 1..=3),
        lin_counts in prop::collection::vec(0u64..=1 << 20, 1..=6),
        extra_records in any::<bool>(),
        dict in 1u64..=8192,
        hidden in 1u64..=512,
        layers in 1u64..=6,
        embeddings in 1u64..=3,
        lm_p in 0u64..=1 << 20,
        tied in any::<bool>(),
    ) -> ModelProfile {
        let mut operators = Vec::new();
        for (i, &p) in emb_counts.iter().enumerate() {
            operators.push(OperatorRecord::new(format!("emb_{i}"), OperatorKind::Embedding, p));
        }
        for (i, &p) in lin_counts.iter().enumerate() {
            operators.push(OperatorRecord::new(format!("lin_{i}"), OperatorKind::Linear, p));
        }
        if extra_records {
            operators.push(OperatorRecord::new("bias", OperatorKind::Bias, 4096));
            operators.push(OperatorRecord::new("norm", OperatorKind::LayerNorm, 1024));
        }
        let profile = ModelProfile {
            name: "prop".to_string(),
            operators,
            dict_size: dict,
            hidden_size: hidden,
            layer_count: layers,
            embedding_count: embeddings,
            embed_params: emb_counts.iter().sum(),
            other_params: lin_counts.iter().sum(),
            lm_head_param_bytes: lm_p,
            lm_head_tied: tied,
        };
        profile.validate().expect("generated profile is valid");
        profile
    }
}

prop_compose! {
    fn arb_chunk()(size in 1u64..=1 << 22) -> ChunkConfig {
        ChunkConfig::new(size).unwrap()
    }
}

prop_compose! {
    fn arb_precision()(half in 1u64..=4, extra in 0u64..=4, head_full in any::<bool>()) -> PrecisionSpec {
        let full = half + extra;
        let prec = PrecisionSpec {
            half_bytes: half,
            full_bytes: full,
            lm_head_bytes: if head_full { full } else { half },
        };
        prec.validate().expect("generated precision is valid");
        prec
    }
}

prop_compose! {
    fn arb_run()(bs in 1u64..=32, sl in 2u64..=256) -> RunConfig {
        RunConfig::new(bs, sl).unwrap()
    }
}

prop_compose! {
    fn arb_hardware()(gpu in 1u64..=8, page_pow in 20u32..=22, big_base in any::<bool>()) -> HardwareProfile {
        let base = if big_base { 1 << 30 } else { 0 };
        HardwareProfile {
            gpu_count: gpu,
            capacity_bytes: base + (1 << 40),
            page_bytes: 1 << page_pow,
            base_bytes: base,
        }
    }
}

/// All hybrid layouts for a GPU count, larger dp first.
fn hybrids(gpu: u64) -> Vec<StrategySpec> {
    let mut v = Vec::new();
    let mut dp = gpu / 2;
    while dp >= 2 {
        if gpu.is_multiple_of(dp) && gpu / dp >= 2 {
            v.push(StrategySpec::hybrid(dp, gpu / dp));
        }
        dp -= 1;
    }
    v
}

fn all_strategies(gpu: u64) -> Vec<StrategySpec> {
    let mut v = vec![StrategySpec::cdp(gpu)];
    if gpu > 1 {
        v.push(StrategySpec::adp(gpu));
        v.push(StrategySpec::tp(gpu));
        v.extend(hybrids(gpu));
    }
    v
}

proptest! {
    /// align_to_page returns the least page multiple not below the input.
    #[test]
    fn alignment_is_minimal(raw in 0u64..=1 << 40, page_pow in 12u32..=23) {
        let page = 1u64 << page_pow;
        let aligned = align_to_page(raw, page);
        prop_assert_eq!(aligned % page, 0);
        prop_assert!(aligned >= raw);
        prop_assert!(aligned - raw < page);
    }

    /// Every peak is exactly reconstructible from its breakdown fields and
    /// the strategy rule — the breakdown never hides a term.
    #[test]
    fn breakdown_reconstructs_peak(
        model in arb_profile(),
        chunk in arb_chunk(),
        prec in arb_precision(),
        run in arb_run(),
        hw in arb_hardware(),
    ) {
        let gpu = hw.gpu_count as u128;
        for strat in all_strategies(hw.gpu_count) {
            let b = estimate_peak(&strat, &model, &chunk, &prec, &run, &hw).unwrap();
            let base = b.base as u128;
            let params = b.params as u128;
            let half = b.params_half as u128;
            let os = b.optimizer_states as u128;
            let var = b.outputs as u128 + b.lm_head as u128;
            let back = b.tp_backward_buffer as u128;
            let expected = match strat.kind {
                StrategyKind::Cdp => base + params + os + var,
                StrategyKind::Adp => base + half + (params - half + os).div_ceil(gpu) + var,
                StrategyKind::Tp => base + (params + os).div_ceil(gpu) + var + back,
                StrategyKind::Hybrid => {
                    base + half + (params - half + os).div_ceil(gpu) + var
                        - half * strat.tp_count as u128 / gpu
                        + back
                }
                StrategyKind::CpuOffload => unreachable!(),
            };
            prop_assert_eq!(b.peak as u128, expected, "{} breakdown mismatch", strat.label());
        }
    }

    /// Collapse identities on one GPU, for arbitrary inputs.
    #[test]
    fn single_gpu_collapses(
        model in arb_profile(),
        chunk in arb_chunk(),
        prec in arb_precision(),
        run in arb_run(),
        page_pow in 20u32..=22,
    ) {
        let hw = HardwareProfile {
            gpu_count: 1,
            capacity_bytes: 1 << 40,
            page_bytes: 1 << page_pow,
            base_bytes: 0,
        };
        let single = estimate_peak_single(&model, &chunk, &prec, &run, &hw).unwrap().peak;
        let adp = estimate_peak_adp(&model, &chunk, &prec, &run, &hw).unwrap().peak;
        let tp = estimate_peak_tp(&model, &chunk, &prec, &run, &StrategySpec::tp(1), &hw).unwrap();
        prop_assert_eq!(adp, single);
        prop_assert_eq!(tp.peak, single);
        prop_assert_eq!(tp.tp_backward_buffer, 0);
    }

    /// Sharding never increases the peak, for any GPU count.
    #[test]
    fn adp_never_exceeds_single(
        model in arb_profile(),
        chunk in arb_chunk(),
        prec in arb_precision(),
        run in arb_run(),
        hw in arb_hardware(),
    ) {
        let single = estimate_peak_single(&model, &chunk, &prec, &run, &hw).unwrap().peak;
        let adp = estimate_peak_adp(&model, &chunk, &prec, &run, &hw).unwrap().peak;
        prop_assert!(adp <= single);
    }

    /// Peaks are nondecreasing in batch size, sequence length, layer count,
    /// and dictionary size.
    #[test]
    fn peaks_are_monotone(
        model in arb_profile(),
        chunk in arb_chunk(),
        prec in arb_precision(),
        run in arb_run(),
        hw in arb_hardware(),
    ) {
        let mut bigger_model = model.clone();
        bigger_model.layer_count += 1;
        bigger_model.dict_size += 17;
        let bigger_run = RunConfig::new(run.batch_size + 1, run.seq_len + 1).unwrap();
        for strat in all_strategies(hw.gpu_count) {
            let here = estimate_peak(&strat, &model, &chunk, &prec, &run, &hw).unwrap().peak;
            let more_data = estimate_peak(&strat, &model, &chunk, &prec, &bigger_run, &hw).unwrap().peak;
            let more_model = estimate_peak(&strat, &bigger_model, &chunk, &prec, &run, &hw).unwrap().peak;
            prop_assert!(more_data >= here, "{} decreased with bigger run", strat.label());
            prop_assert!(more_model >= here, "{} decreased with bigger model", strat.label());
        }
    }

    /// Bias/layernorm/other records never shift any estimate.
    #[test]
    fn unaccounted_operators_are_free(
        model in arb_profile(),
        chunk in arb_chunk(),
        prec in arb_precision(),
        run in arb_run(),
        hw in arb_hardware(),
        noise in 1u64..=1 << 24,
    ) {
        let mut noisy = model.clone();
        noisy.operators.push(OperatorRecord::new("extra_bias", OperatorKind::Bias, noise));
        noisy.operators.push(OperatorRecord::new("extra_norm", OperatorKind::LayerNorm, noise));
        noisy.operators.push(OperatorRecord::new("extra_other", OperatorKind::Other, noise));
        for strat in all_strategies(hw.gpu_count) {
            let clean = estimate_peak(&strat, &model, &chunk, &prec, &run, &hw).unwrap();
            let with_noise = estimate_peak(&strat, &noisy, &chunk, &prec, &run, &hw).unwrap();
            prop_assert_eq!(&clean, &with_noise, "{} moved on unaccounted records", strat.label());
        }
    }

    /// The decision report satisfies its structural invariants: row order,
    /// score-iff-batch, breakdown presence, per-row maximality, dominance of
    /// the chosen strategy, and the literal fallback gate.
    #[test]
    fn decision_report_invariants(
        model in arb_profile(),
        chunk in arb_chunk(),
        prec in arb_precision(),
        seq_len in 2u64..=128,
        hw in arb_hardware(),
        spread in 0u64..=100,
    ) {
        // Interpolate capacity between "nothing fits" and just below the
        // censoring point, so every regime appears but no search censors.
        let cap = 512;
        let o = Oracle::new(&model, &chunk, &prec, &hw);
        let sl = seq_len as u128;
        let strategies = all_strategies(hw.gpu_count);
        let peak1 = |s: &StrategySpec| match s.kind {
            StrategyKind::Cdp => o.peak_single(1, sl),
            StrategyKind::Adp => o.peak_adp(1, sl),
            StrategyKind::Tp => o.peak_tp(1, sl),
            _ => o.peak_hybrid(1, sl, s.tp_count as u128),
        };
        let peak_cap = |s: &StrategySpec| match s.kind {
            StrategyKind::Cdp => o.peak_single(cap as u128, sl),
            StrategyKind::Adp => o.peak_adp(cap as u128, sl),
            StrategyKind::Tp => o.peak_tp(cap as u128, sl),
            _ => o.peak_hybrid(cap as u128, sl, s.tp_count as u128),
        };
        let lo = strategies.iter().map(&peak1).min().unwrap() - 1;
        let hi = strategies.iter().map(&peak_cap).min().unwrap() - 1;
        let capacity = lo + (hi - lo) * spread as u128 / 100;
        let hw = HardwareProfile {
            capacity_bytes: u64::try_from(capacity).unwrap().max(hw.base_bytes + 1),
            ..hw
        };

        let opts = PlannerOptions { batch_cap: cap, ..PlannerOptions::default() };
        let report = decide(&model, &chunk, &prec, seq_len, &hw, &opts).unwrap();

        // Row order: cdp, adp, tp, hybrids with dp descending.
        let mut expected_labels = vec!["cdp".to_string()];
        if hw.gpu_count > 1 {
            expected_labels.push("adp".to_string());
            expected_labels.push("tp".to_string());
            expected_labels.extend(hybrids(hw.gpu_count).iter().map(|s| s.label()));
        }
        let labels: Vec<String> = report.results.iter().map(|r| r.strategy.label()).collect();
        prop_assert_eq!(labels, expected_labels);

        for row in &report.results {
            prop_assert_eq!(row.score.is_zero(), row.max_batch == 0);
            prop_assert_eq!(row.breakdown_at_max.is_some(), row.max_batch >= 1);
            if let Some(b) = &row.breakdown_at_max {
                prop_assert!(b.peak <= hw.capacity_bytes);
                let over = RunConfig::new(row.max_batch + 1, seq_len).unwrap();
                let next = estimate_peak(&row.strategy, &model, &chunk, &prec, &over, &hw)
                    .unwrap()
                    .peak;
                prop_assert!(next > hw.capacity_bytes, "max_batch not maximal");
            }
        }

        let gate = if hw.gpu_count > 1 { StrategyKind::Tp } else { StrategyKind::Cdp };
        let gate_zero = report
            .results
            .iter()
            .find(|r| r.strategy.kind == gate)
            .map(|r| r.score.is_zero())
            .unwrap();
        if gate_zero {
            prop_assert_eq!(report.chosen, StrategySpec::cpu_offload());
            prop_assert_eq!(report.chosen_batch, 0);
        } else {
            let best = report.results.iter().map(|r| r.score).max().unwrap();
            let first = report.results.iter().position(|r| r.score == best).unwrap();
            prop_assert_eq!(report.results[first].strategy, report.chosen);
            prop_assert_eq!(report.results[first].max_batch, report.chosen_batch);
        }

        // A 1x1 sweep is exactly one decide.
        let cells = sweep_serial(&model, &chunk, &prec, &hw, &[seq_len], &[hw.gpu_count], &opts).unwrap();
        prop_assert_eq!(cells.len(), 1);
        prop_assert_eq!(cells[0].report.as_ref().unwrap(), &report);
    }

    /// Scores round-trip through their JSON form.
    #[test]
    fn score_roundtrips(halves in 0u64..=1 << 52) {
        let score = Score::from_halves(halves as u128);
        let json = serde_json::to_string(&score).unwrap();
        let back: Score = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, score);
    }

    /// Derived manifests round-trip through their on-disk JSON form.
    #[test]
    fn manifests_roundtrip(
        vocab in 1u64..=60_000,
        heads in 1u64..=16,
        hidden_mult in 1u64..=48,
        layers in 1u64..=32,
        embeddings in 1u64..=2,
        ffn in 1u64..=4,
        tie in any::<bool>(),
    ) {
        let arch = ArchitectureSpec {
            vocab_size: vocab,
            hidden_size: heads * hidden_mult,
            num_layers: layers,
            num_embeddings: embeddings,
            num_attention_heads: heads,
            ffn_multiplier: ffn,
            tie_lm_head: tie,
            half_bytes: 2,
            full_bytes: 4,
            lm_head_bytes: None,
        };
        let manifest = Manifest::from_derivation(&arch, "prop").unwrap();
        let reparsed = Manifest::from_json(&manifest.to_json(), "prop.json").unwrap();
        prop_assert_eq!(&reparsed, &manifest);
        prop_assert_eq!(reparsed.profile(), manifest.profile());
    }
}
