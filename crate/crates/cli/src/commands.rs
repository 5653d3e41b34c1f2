use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use attn_accel_core::config::{num_tiles, validate_run_params, DesignParams, RunParams};
use attn_accel_core::corpus::{generate, Amplitude, ERROR_THRESHOLD, PRNG_ALGORITHM};
use attn_accel_core::engine::reference::{mha_reference, Matrix};
use attn_accel_core::engine::{compare_to_reference, mha_forward, ErrorReport, HeadWeights};
use attn_accel_core::fxp::QTensor;
use attn_accel_core::perf::{dse_sweep, perf_report_with, Calibration, ResourceModel};
use attn_accel_core::scalar::format_decimal;
use attn_accel_core::tensor_file;
use attn_accel_core::{ExactPerfReport, RefHeadWeights, ResourceVector};

use crate::error::CliError;
use crate::manifest::{run_from_commands, HeadFiles, LoadedManifest, RunManifest};

/// Output text format of `perf` and `dse`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Table,
    Csv,
}

pub fn load_design(path: &Path) -> Result<DesignParams, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    DesignParams::from_toml(&text).map_err(|e| match CliError::from(e) {
        CliError::Format(m) => CliError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn load_calibration(path: &Path) -> Result<Calibration, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Calibration::from_toml(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

/// Design and resource model after applying an optional calibration file.
pub fn calibrated(design: DesignParams, calibration: Option<&Path>) -> Result<(DesignParams, ResourceModel), CliError> {
    match calibration {
        Some(p) => {
            let cal = load_calibration(p)?;
            Ok((design.with_calibration(&cal), cal.resources))
        }
        None => Ok((design, Calibration::frozen().resources)),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Format(format!("stdout: {e}")))
}

fn check_run(design: &DesignParams, run: &RunParams) -> Result<(), CliError> {
    validate_run_params(design, run)
        .into_result()
        .map_err(|v| CliError::Invalid(v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")))
}

pub struct GenRequest {
    pub seed: u64,
    pub run: Option<RunParams>,
    pub commands: Option<PathBuf>,
    pub design: DesignParams,
    pub amplitude: Amplitude,
    pub out_dir: PathBuf,
}

/// Write a seeded corpus and a manifest for it; returns the manifest path.
pub fn cmd_gen(req: &GenRequest, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    let run = match &req.commands {
        Some(p) => run_from_commands(&req.design, p)?,
        None => req.run.unwrap_or(RunParams::new(8, 768, 64)),
    };
    check_run(&req.design, &run)?;
    let dir = &req.out_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let save = |name: &Path, t: &QTensor| {
        let p = dir.join(name);
        tensor_file::save(&p, t).map_err(|e| CliError::io(&p, e))
    };

    let corpus = generate(req.seed, &run, req.amplitude);
    let input = PathBuf::from("x.famt");
    save(&input, &corpus.x)?;
    let mut heads = Vec::with_capacity(corpus.heads.len());
    for (i, w) in corpus.heads.iter().enumerate() {
        let files = HeadFiles::numbered(i);
        let HeadWeights { w_q, w_k, w_v, b_q, b_k, b_v } = w;
        for (name, t) in [
            (&files.w_q, w_q),
            (&files.w_k, w_k),
            (&files.w_v, w_v),
            (&files.b_q, b_q),
            (&files.b_k, b_k),
            (&files.b_v, b_v),
        ] {
            save(name, t)?;
        }
        heads.push(files);
    }

    let commands = match &req.commands {
        Some(src) => {
            let name = PathBuf::from(
                src.file_name().ok_or_else(|| CliError::Format(format!("{}: not a file", src.display())))?,
            );
            let dst = dir.join(&name);
            fs::copy(src, &dst).map_err(|e| CliError::io(&dst, e))?;
            Some(name)
        }
        None => None,
    };
    let manifest = RunManifest {
        input,
        output: "out.famt".into(),
        log: "simulate.log".into(),
        run: commands.is_none().then_some(run),
        commands,
        seed: Some(req.seed),
        prng: Some(PRNG_ALGORITHM.into()),
        threshold: None,
        design: req.design.clone(),
        amplitude: Some(req.amplitude),
        heads,
    };
    let path = dir.join("manifest.toml");
    manifest.save(&path)?;
    write_out(out, &format!("wrote {} tensors and {} for {run}\n", 1 + 6 * run.h, path.display()))?;
    Ok(path)
}

/// Manifest, design, run, and tensors ready for the engine.
struct Prepared {
    loaded: LoadedManifest,
    design: DesignParams,
    run: RunParams,
    x: QTensor,
    heads: Vec<HeadWeights>,
}

fn prepare(manifest: &Path, design: Option<&Path>, commands: Option<&Path>) -> Result<Prepared, CliError> {
    let loaded = LoadedManifest::load(manifest)?;
    let design = match design {
        Some(p) => load_design(p)?,
        None => loaded.manifest.design.clone(),
    };
    let run = loaded.run_params(&design, commands)?;
    check_run(&design, &run)?;
    let x = loaded.load_input()?;
    let heads = loaded.load_heads()?;
    if heads.len() != run.h as usize {
        return Err(CliError::Format(format!(
            "{}: lists {} heads but the run has h={}",
            manifest.display(),
            heads.len(),
            run.h
        )));
    }
    Ok(Prepared { loaded, design, run, x, heads })
}

pub struct SimulateRequest {
    pub manifest: PathBuf,
    pub design: Option<PathBuf>,
    pub commands: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Text of the simulation log.
pub fn simulate_log(
    p_seed: Option<u64>,
    design: &DesignParams,
    run: &RunParams,
    output: &Path,
    saturated: usize,
) -> String {
    let (sl, d_k, h) = (run.seq() as u64, run.d_k() as u64, u64::from(run.h));
    let mut log = String::new();
    let _ = writeln!(log, "run: {run}");
    let _ = writeln!(log, "heads: {h}");
    let _ = writeln!(log, "tile_size: {}", design.tile_size);
    let _ = writeln!(log, "tiles: {}", num_tiles(run, design));
    let _ = writeln!(log, "qkv_elements: {}", 3 * h * sl * d_k);
    let _ = writeln!(log, "score_elements: {}", h * sl * sl);
    let _ = writeln!(log, "softmax_elements: {}", h * sl * sl);
    let _ = writeln!(log, "attend_elements: {}", h * sl * d_k);
    let _ = writeln!(log, "output_elements: {}", sl * u64::from(run.d_model));
    let _ = writeln!(log, "saturated_accumulators: {saturated}");
    let _ = writeln!(log, "prng: {PRNG_ALGORITHM}");
    if let Some(seed) = p_seed {
        let _ = writeln!(log, "seed: {seed}");
    }
    let _ = writeln!(log, "output: {}", output.display());
    log
}

pub fn cmd_simulate(req: &SimulateRequest, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    let p = prepare(&req.manifest, req.design.as_deref(), req.commands.as_deref())?;
    let result = mha_forward(&p.run, &p.design, &p.x, &p.heads)?;
    let output = req.out.clone().unwrap_or_else(|| p.loaded.resolve(&p.loaded.manifest.output));
    tensor_file::save(&output, &result.concat).map_err(|e| CliError::io(&output, e))?;
    let log = simulate_log(p.loaded.manifest.seed, &p.design, &p.run, &output, result.saturated);
    let log_path = p.loaded.resolve(&p.loaded.manifest.log);
    fs::write(&log_path, &log).map_err(|e| CliError::io(&log_path, e))?;
    write_out(out, &log)?;
    Ok(output)
}

pub struct CompareRequest {
    pub manifest: PathBuf,
    pub design: Option<PathBuf>,
    pub commands: Option<PathBuf>,
    pub threshold: Option<f64>,
}

pub fn format_error_report(report: &ErrorReport, threshold: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "max_abs_error: {:.9}", report.max_abs);
    let _ = writeln!(s, "mean_abs_error: {:.9}", report.mean_abs);
    for (i, (max, mean)) in report.per_head.iter().enumerate() {
        let _ = writeln!(s, "head {i}: max_abs_error {max:.9} mean_abs_error {mean:.9}");
    }
    let verdict = if report.max_abs <= threshold { "within" } else { "exceeds" };
    let _ = writeln!(s, "threshold: {threshold} ({verdict})");
    s
}

/// Fixed-point output against the float reference. Errors with exit 1 above the threshold.
pub fn cmd_compare(req: &CompareRequest, out: &mut dyn Write) -> Result<ErrorReport, CliError> {
    let p = prepare(&req.manifest, req.design.as_deref(), req.commands.as_deref())?;
    let fixed = mha_forward(&p.run, &p.design, &p.x, &p.heads)?;
    let refs: Vec<RefHeadWeights> = p.heads.iter().map(RefHeadWeights::from_quantized).collect();
    let reference = mha_reference(&p.run, &Matrix::from_qtensor(&p.x), &refs)?;
    let report = compare_to_reference(&p.run, &fixed.concat, &reference);
    let threshold = req.threshold.or(p.loaded.manifest.threshold).unwrap_or(ERROR_THRESHOLD);
    write_out(out, &format_error_report(&report, threshold))?;
    if report.max_abs > threshold {
        return Err(CliError::Threshold(format!("max abs error {} exceeds {threshold}", report.max_abs)));
    }
    Ok(report)
}

pub const PERF_COLUMNS: [&str; 12] =
    ["SL", "d_model", "h", "TS", "GOP", "cycles", "latency_ms", "GOPS", "DSP", "BRAM18k", "LUT", "FF"];

fn perf_cells(r: &ExactPerfReport) -> Vec<String> {
    vec![
        r.run.seq_len.to_string(),
        r.run.d_model.to_string(),
        r.run.h.to_string(),
        r.tile_size.to_string(),
        format_decimal(&r.gop, 9),
        r.breakdown.total_cycles.to_string(),
        format_decimal(&r.latency_ms, 6),
        format_decimal(&r.gops, 3),
        r.resources.dsp.to_string(),
        r.resources.bram18k.to_string(),
        r.resources.lut.to_string(),
        r.resources.ff.to_string(),
    ]
}

pub fn render(header: &[&str], rows: &[Vec<String>], format: Format) -> String {
    let mut s = String::new();
    match format {
        Format::Csv => {
            let _ = writeln!(s, "{}", header.join(","));
            for r in rows {
                let _ = writeln!(s, "{}", r.join(","));
            }
        }
        Format::Table => {
            let widths: Vec<usize> = (0..header.len())
                .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
                .collect();
            let line = |cells: Vec<&str>| {
                cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ")
            };
            let _ = writeln!(s, "{}", line(header.to_vec()));
            for r in rows {
                let _ = writeln!(s, "{}", line(r.iter().map(String::as_str).collect()));
            }
        }
    }
    s
}

pub struct PerfRequest {
    pub design: DesignParams,
    pub calibration: Option<PathBuf>,
    pub runs: Vec<RunParams>,
    pub format: Format,
    pub out: Option<PathBuf>,
}

pub fn emit(text: &str, file: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    match file {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => write_out(out, text),
    }
}

pub fn cmd_perf(req: &PerfRequest, out: &mut dyn Write) -> Result<Vec<ExactPerfReport>, CliError> {
    req.design.validate()?;
    let (design, model) = calibrated(req.design.clone(), req.calibration.as_deref())?;
    let reports = req
        .runs
        .iter()
        .map(|run| {
            check_run(&design, run).map_err(|e| CliError::Invalid(format!("{run}: {e}")))?;
            Ok(perf_report_with(&design, run, &model)?)
        })
        .collect::<Result<Vec<ExactPerfReport>, CliError>>()?;
    let rows: Vec<Vec<String>> = reports.iter().map(perf_cells).collect();
    emit(&render(&PERF_COLUMNS, &rows, req.format), req.out.as_deref(), out)?;
    Ok(reports)
}

pub struct DseRequest {
    pub design: DesignParams,
    pub calibration: Option<PathBuf>,
    pub run: RunParams,
    pub tile_sizes: Vec<u32>,
    pub heads: Vec<u32>,
    pub budget: ResourceVector,
    pub format: Format,
    pub out: Option<PathBuf>,
}

pub fn cmd_dse(req: &DseRequest, out: &mut dyn Write) -> Result<Vec<ExactPerfReport>, CliError> {
    let (template, model) = calibrated(req.design.clone(), req.calibration.as_deref())?;
    let entries = dse_sweep(&template, &req.budget, &req.tile_sizes, &req.heads, &req.run, &model)?;
    let mut header = vec!["rank"];
    header.extend(PERF_COLUMNS);
    let rows: Vec<Vec<String>> = entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut r = vec![(i + 1).to_string()];
            r.extend(perf_cells(&e.report));
            r
        })
        .collect();
    emit(&render(&header, &rows, req.format), req.out.as_deref(), out)?;
    Ok(entries.into_iter().map(|e| e.report).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_and_csv_rendering() {
        let rows = vec![vec!["1".to_string(), "22".to_string()]];
        assert_eq!(render(&["a", "b"], &rows, Format::Csv), "a,b\n1,22\n");
        assert_eq!(render(&["a", "b"], &rows, Format::Table), "a   b\n1  22\n");
    }

    #[test]
    fn log_counts_stage_elements() {
        let log = simulate_log(Some(1), &DesignParams::default(), &RunParams::new(8, 768, 64), Path::new("o"), 0);
        assert!(log.contains("tiles: 12\n"));
        assert!(log.contains("qkv_elements: 147456\n"));
        assert!(log.contains("score_elements: 32768\n"));
        assert!(log.contains("output_elements: 49152\n"));
        assert!(log.contains(PRNG_ALGORITHM));
    }
}
