//! Shared test support: an independent straight-line re-derivation of every
//! memory formula, a literal brute-force re-derivation of the planner, and
//! seeded random input generators.
//!
//! Nothing here calls back into the library's arithmetic — each quantity is
//! written out directly from its definition so the two implementations can
//! only agree if both are right.

#![allow(dead_code)]

use memplan_core::estimator::estimate_peak;
use memplan_core::types::{
    ChunkConfig, HardwareProfile, ModelProfile, OperatorKind, OperatorRecord, PrecisionSpec,
    RunConfig, StrategySpec,
};
use rand::rngs::StdRng;
use rand::Rng;

/// Plain-number inputs for the straight-line oracle.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub embed_p: u128,
    pub other_p: u128,
    pub lm_p_bytes: u128,
    pub dict: u128,
    pub hidden: u128,
    pub layers: u128,
    pub embeddings: u128,
    /// Element counts of embedding and linear operators only.
    pub accounted_ops: Vec<u128>,
    pub cs: u128,
    pub b16: u128,
    pub b32: u128,
    pub blm: u128,
    pub page: u128,
    pub base: u128,
    pub gpu: u128,
}

impl Oracle {
    /// Collects the oracle's view of library inputs.
    pub fn new(
        model: &ModelProfile,
        chunk: &ChunkConfig,
        prec: &PrecisionSpec,
        hw: &HardwareProfile,
    ) -> Oracle {
        Oracle {
            embed_p: model.embed_params as u128,
            other_p: model.other_params as u128,
            lm_p_bytes: model.lm_head_param_bytes as u128,
            dict: model.dict_size as u128,
            hidden: model.hidden_size as u128,
            layers: model.layer_count as u128,
            embeddings: model.embedding_count as u128,
            accounted_ops: model
                .operators
                .iter()
                .filter(|op| op.kind.is_accounted())
                .map(|op| op.param_count as u128)
                .collect(),
            cs: chunk.chunk_size as u128,
            b16: prec.half_bytes as u128,
            b32: prec.full_bytes as u128,
            blm: prec.lm_head_bytes as u128,
            page: hw.page_bytes as u128,
            base: hw.base_bytes as u128,
            gpu: hw.gpu_count as u128,
        }
    }

    fn align(&self, raw: u128) -> u128 {
        raw.div_ceil(self.page) * self.page
    }

    fn pooled_elements(&self) -> u128 {
        self.embed_p + self.other_p.div_ceil(self.cs) * self.cs
    }

    pub fn m_p(&self) -> u128 {
        self.align(self.pooled_elements() * (self.b16 + self.b32))
    }

    pub fn m_p16(&self) -> u128 {
        self.align(self.pooled_elements() * self.b16)
    }

    pub fn m_p32(&self) -> u128 {
        self.align(self.pooled_elements() * self.b32)
    }

    pub fn m_os(&self) -> u128 {
        self.accounted_ops
            .iter()
            .map(|&p| self.align(p * 2 * self.b32))
            .sum()
    }

    pub fn m_out(&self, bs: u128, sl: u128) -> u128 {
        self.align((self.embeddings + self.layers) * bs * sl * self.hidden * self.b16)
    }

    pub fn m_lm(&self, bs: u128, sl: u128) -> u128 {
        self.align(bs * sl * self.dict * self.blm)
            + 2 * self.align(bs * (sl - 1) * self.dict * self.blm)
            + self.lm_p_bytes
    }

    pub fn m_back(&self, bs: u128, sl: u128, tp: u128) -> u128 {
        (self.layers * bs * sl * self.hidden * self.b16 * (tp - 1))
            .div_ceil(tp * self.page)
            * self.page
    }

    pub fn peak_single(&self, bs: u128, sl: u128) -> u128 {
        self.base + self.m_p() + self.m_os() + self.m_out(bs, sl) + self.m_lm(bs, sl)
    }

    pub fn peak_adp(&self, bs: u128, sl: u128) -> u128 {
        // The divided fp32 share is the pool complement of the gathered
        // fp16 copy, so no padding is charged twice.
        self.base
            + self.m_p16()
            + (self.m_p() - self.m_p16() + self.m_os()).div_ceil(self.gpu)
            + self.m_out(bs, sl)
            + self.m_lm(bs, sl)
    }

    pub fn peak_tp(&self, bs: u128, sl: u128) -> u128 {
        self.base
            + (self.m_p() + self.m_os()).div_ceil(self.gpu)
            + self.m_out(bs, sl)
            + self.m_lm(bs, sl)
            + self.m_back(bs, sl, self.gpu)
    }

    pub fn peak_hybrid(&self, bs: u128, sl: u128, tp: u128) -> u128 {
        self.peak_adp(bs, sl) - self.m_p16() * tp / self.gpu + self.m_back(bs, sl, tp)
    }
}

/// Literal brute-force planner: linear batch scan per strategy, the scoring
/// table applied verbatim, first-in-order tie-break, TP-gated fallback.
pub struct BruteDecision {
    /// `(label, max_batch, score_in_halves)` in evaluation order.
    pub rows: Vec<(String, u64, u128)>,
    pub chosen: String,
    pub chosen_batch: u64,
}

pub fn brute_force_decide(
    model: &ModelProfile,
    chunk: &ChunkConfig,
    prec: &PrecisionSpec,
    seq_len: u64,
    hw: &HardwareProfile,
    scan_limit: u64,
) -> BruteDecision {
    let gpu = hw.gpu_count;
    let mut strategies = vec![StrategySpec::cdp(gpu)];
    if gpu > 1 {
        strategies.push(StrategySpec::adp(gpu));
        strategies.push(StrategySpec::tp(gpu));
        for dp in (2..=gpu / 2).rev() {
            if gpu.is_multiple_of(dp) && gpu / dp >= 2 {
                strategies.push(StrategySpec::hybrid(dp, gpu / dp));
            }
        }
    }

    let mut rows = Vec::new();
    for strat in &strategies {
        let mut max_batch = 0;
        for bs in 1..=scan_limit {
            let run = RunConfig::new(bs, seq_len).unwrap();
            let peak = estimate_peak(strat, model, chunk, prec, &run, hw)
                .unwrap()
                .peak;
            if peak <= hw.capacity_bytes {
                max_batch = bs;
            } else {
                break;
            }
        }
        let mb = max_batch as u128;
        let halves = match strat.label().as_str() {
            "cdp" => 3 * mb * gpu as u128,
            "adp" => 2 * mb * gpu as u128,
            "tp" => 2 * mb,
            _ => 2 * mb * strat.dp_count as u128,
        };
        rows.push((strat.label(), max_batch, halves));
    }

    let gate = if gpu > 1 { "tp" } else { "cdp" };
    let gate_halves = rows.iter().find(|r| r.0 == gate).map(|r| r.2).unwrap_or(0);
    if gate_halves == 0 {
        return BruteDecision {
            rows,
            chosen: "cpu-offload".to_string(),
            chosen_batch: 0,
        };
    }
    let best_halves = rows.iter().map(|r| r.2).max().unwrap();
    let best = rows.iter().find(|r| r.2 == best_halves).unwrap();
    BruteDecision {
        chosen: best.0.clone(),
        chosen_batch: best.1,
        rows,
    }
}

/// A random, always-valid model profile with mixed operator kinds.
pub fn random_profile(rng: &mut StdRng) -> ModelProfile {
    let mut operators = Vec::new();
    let mut embed_params = 0u64;
    let mut other_params = 0u64;
    for i in 0..rng.random_range(1..=4u32) {
        let p = rng.random_range(0..=1u64 << 22);
        embed_params += p;
        operators.push(OperatorRecord::new(
            format!("emb_{i}"),
            OperatorKind::Embedding,
            p,
        ));
    }
    for i in 0..rng.random_range(1..=10u32) {
        let p = rng.random_range(0..=1u64 << 22);
        other_params += p;
        operators.push(OperatorRecord::new(
            format!("lin_{i}"),
            OperatorKind::Linear,
            p,
        ));
    }
    // Unaccounted records must never shift any estimate.
    if rng.random_bool(0.5) {
        operators.push(OperatorRecord::new(
            "bias",
            OperatorKind::Bias,
            rng.random_range(0..=4096),
        ));
        operators.push(OperatorRecord::new(
            "norm",
            OperatorKind::LayerNorm,
            rng.random_range(0..=4096),
        ));
    }
    let profile = ModelProfile {
        name: "random".to_string(),
        operators,
        dict_size: rng.random_range(1..=4096),
        hidden_size: rng.random_range(1..=512),
        layer_count: rng.random_range(1..=6),
        embedding_count: rng.random_range(1..=3),
        embed_params,
        other_params,
        lm_head_param_bytes: rng.random_range(0..=1 << 20),
        lm_head_tied: rng.random_bool(0.5),
    };
    profile.validate().expect("generated profile must validate");
    profile
}

pub fn random_chunk(rng: &mut StdRng) -> ChunkConfig {
    ChunkConfig::new(1 << rng.random_range(12..=22u32)).unwrap()
}

pub fn random_precision(rng: &mut StdRng) -> PrecisionSpec {
    let half = *[1, 2].get(rng.random_range(0..2usize)).unwrap();
    let full = [2, 4, 8][rng.random_range(0..3usize)].max(half);
    let lm_head = if rng.random_bool(0.5) { half } else { full };
    let prec = PrecisionSpec {
        half_bytes: half,
        full_bytes: full,
        lm_head_bytes: lm_head,
    };
    prec.validate().expect("generated precision must validate");
    prec
}

pub fn random_run(rng: &mut StdRng) -> RunConfig {
    RunConfig::new(rng.random_range(1..=16), rng.random_range(2..=512)).unwrap()
}

pub fn random_hardware(rng: &mut StdRng, gpu_count: u64) -> HardwareProfile {
    let base = if rng.random_bool(0.5) { 0 } else { 1 << 30 };
    let hw = HardwareProfile {
        gpu_count,
        capacity_bytes: base + rng.random_range(1..=1u64 << 36),
        page_bytes: 1 << rng.random_range(20..=22u32),
        base_bytes: base,
    };
    hw.validate().expect("generated hardware must validate");
    hw
}
