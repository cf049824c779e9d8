//! Command implementations: shared input resolution, then one function per
//! subcommand. Each returns the process exit code (0 feasible, 2 predicted
//! OOM / offload verdict); input problems surface as [`CliError`] and map
//! to exit code 1 in `main`.

use memplan_core::{
    choose_chunk_size, decide, default_chunk_candidates, estimate_peak, sweep, ChunkConfig,
    HardwareProfile, HybridPolicy, Manifest, ModelProfile, PlannerOptions, PrecisionSpec,
    RunConfig, StrategyKind, DEFAULT_BASE_BYTES, DEFAULT_PAGE_BYTES,
};

use crate::args::{parse_byte_size, EstimateArgs, Format, HybridArg, ModelArgs, PlanArgs, SweepArgs};
use crate::output::{
    mb_string, signed_mb_string, sweep_csv, BreakdownRecord, EstimateSection, InputEcho,
    OutputRecord, PlanSection, ToolInfo, SCHEMA_VERSION,
};

/// Environment variable consulted for the page size when --page-size is
/// absent; the flag always wins.
pub const PAGE_SIZE_ENV: &str = "MEMPLAN_PAGE_SIZE";

/// A fatal input problem; always exit code 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] memplan_core::Error),
}

/// Everything the shared flags resolve to.
pub struct Setup {
    pub manifest_path: String,
    pub profile: ModelProfile,
    pub precision: PrecisionSpec,
    pub chunk: ChunkConfig,
    pub chunk_explicit: bool,
    pub base_bytes: u64,
    pub base_calibrated: bool,
    pub page_bytes: u64,
    pub gpu_mem: u64,
}

impl Setup {
    fn chunk_provenance(&self) -> &'static str {
        if self.chunk_explicit {
            "explicit"
        } else {
            "auto-selected"
        }
    }

    fn base_provenance(&self) -> &'static str {
        if self.base_calibrated {
            "calibrated"
        } else {
            "default placeholder"
        }
    }

    fn hardware(&self, gpu_count: u64) -> Result<HardwareProfile, CliError> {
        Ok(HardwareProfile::new(
            gpu_count,
            self.gpu_mem,
            self.page_bytes,
            self.base_bytes,
        )?)
    }

    fn input_echo(&self, hw: &HardwareProfile, seq_len: u64) -> InputEcho {
        InputEcho {
            model: self.profile.name.clone(),
            manifest_path: self.manifest_path.clone(),
            gpu_count: hw.gpu_count,
            capacity_bytes: hw.capacity_bytes,
            capacity_mb: mb_string(hw.capacity_bytes),
            page_bytes: hw.page_bytes,
            base_bytes: hw.base_bytes,
            base_mb: mb_string(hw.base_bytes),
            base_provenance: self.base_provenance().to_string(),
            seq_len,
            chunk_size: self.chunk.chunk_size,
            chunk_provenance: self.chunk_provenance().to_string(),
            precision: self.precision,
            lm_head_tied: self.profile.lm_head_tied,
        }
    }
}

/// Resolves the shared flags: manifest, precision, chunk size, page size,
/// and baseline, with their provenance.
pub fn prepare(common: &ModelArgs) -> Result<Setup, CliError> {
    let manifest = Manifest::load(&common.model)?;
    let precision = manifest.precision();
    let profile = manifest.profile();
    let chunk = match common.chunk_size {
        Some(size) => ChunkConfig::new(size)?,
        None => choose_chunk_size(&profile, &default_chunk_candidates())?,
    };
    let page_bytes = resolve_page_size(common.page_size)?;
    Ok(Setup {
        manifest_path: common.model.display().to_string(),
        profile,
        precision,
        chunk,
        chunk_explicit: common.chunk_size.is_some(),
        base_bytes: common.m_base.unwrap_or(DEFAULT_BASE_BYTES),
        base_calibrated: common.m_base.is_some(),
        page_bytes,
        gpu_mem: common.gpu_mem,
    })
}

/// Page size precedence: --page-size flag, then MEMPLAN_PAGE_SIZE, then the
/// built-in default.
fn resolve_page_size(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(bytes) = flag {
        return Ok(bytes);
    }
    match std::env::var(PAGE_SIZE_ENV) {
        Ok(raw) => parse_byte_size(&raw)
            .map_err(|reason| CliError::Input(format!("{PAGE_SIZE_ENV}: {reason}"))),
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_PAGE_BYTES),
        Err(err) => Err(CliError::Input(format!("{PAGE_SIZE_ENV}: {err}"))),
    }
}

/// Writes to stdout without panicking when the consumer closes the pipe
/// early (e.g. piping into `head`): the POSIX convention is to exit as if
/// killed by SIGPIPE.
fn emit(text: &str) {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    if let Err(err) = stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()) {
        if err.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(141);
        }
        eprintln!("error: cannot write output: {err}");
        std::process::exit(1);
    }
}

fn print_record(record: &OutputRecord, format: Format) {
    match format {
        Format::Json => emit(&format!("{}\n", record.to_json())),
        Format::Table => emit(&record.render_table()),
    }
}

pub fn cmd_estimate(args: EstimateArgs) -> Result<u8, CliError> {
    let setup = prepare(&args.model)?;
    let hw = setup.hardware(args.gpus)?;
    let run = RunConfig::new(args.batch_size, args.seq_len)?;
    let strategy = args.strategy.spec(hw.gpu_count);
    let breakdown = estimate_peak(
        &strategy,
        &setup.profile,
        &setup.chunk,
        &setup.precision,
        &run,
        &hw,
    )?;
    let fits = breakdown.peak <= hw.capacity_bytes;
    let headroom_bytes = hw.capacity_bytes as i128 - breakdown.peak as i128;
    let record = OutputRecord {
        schema_version: SCHEMA_VERSION,
        tool: ToolInfo::current(),
        input: setup.input_echo(&hw, run.seq_len),
        estimate: Some(EstimateSection {
            strategy: strategy.label(),
            dp_count: strategy.dp_count,
            tp_count: strategy.tp_count,
            batch_size: run.batch_size,
            breakdown: BreakdownRecord::new(breakdown),
            fits,
            headroom_bytes,
            headroom_mb: signed_mb_string(headroom_bytes),
        }),
        plan: None,
    };
    print_record(&record, args.format);
    Ok(if fits { 0 } else { 2 })
}

pub fn cmd_plan(args: PlanArgs) -> Result<u8, CliError> {
    let setup = prepare(&args.model)?;
    let hw = setup.hardware(args.gpus)?;
    let opts = PlannerOptions {
        batch_cap: args.batch_cap,
        hybrid: hybrid_policy(args.hybrid),
    };
    let report = decide(
        &setup.profile,
        &setup.chunk,
        &setup.precision,
        args.seq_len,
        &hw,
        &opts,
    )?;
    let offloaded = report.chosen.kind == StrategyKind::CpuOffload;
    let record = OutputRecord {
        schema_version: SCHEMA_VERSION,
        tool: ToolInfo::current(),
        input: setup.input_echo(&hw, args.seq_len),
        estimate: None,
        plan: Some(PlanSection::from_report(
            &report,
            args.batch_cap,
            hybrid_policy_name(args.hybrid),
        )),
    };
    print_record(&record, args.format);
    Ok(if offloaded { 2 } else { 0 })
}

pub fn cmd_sweep(args: SweepArgs) -> Result<u8, CliError> {
    let setup = prepare(&args.model)?;
    // The per-cell GPU counts come from --gpu-counts; the count here only
    // seeds a valid profile for the sweep to vary.
    let hw = setup.hardware(1)?;
    let opts = PlannerOptions {
        batch_cap: args.batch_cap,
        hybrid: hybrid_policy(args.hybrid),
    };
    let cells = sweep(
        &setup.profile,
        &setup.chunk,
        &setup.precision,
        &hw,
        &args.seq_lens,
        &args.gpu_counts,
        &opts,
    )?;
    emit(&sweep_csv(&cells));
    let all_failed = cells.iter().all(|cell| cell.report.is_err());
    Ok(if all_failed { 1 } else { 0 })
}

fn hybrid_policy(arg: HybridArg) -> HybridPolicy {
    match arg {
        HybridArg::All => HybridPolicy::All,
        HybridArg::Single => HybridPolicy::Balanced,
    }
}

fn hybrid_policy_name(arg: HybridArg) -> &'static str {
    match arg {
        HybridArg::All => "all",
        HybridArg::Single => "balanced",
    }
}
