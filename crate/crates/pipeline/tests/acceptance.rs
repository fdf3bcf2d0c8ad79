#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::Check;
use mbda_pipeline::features::prepare;
use mbda_pipeline::run::compare_prepared;
use mbda_pipeline::{synth_dataset, Dataset, PipelineConfig, SynthSpec};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const BUDGET_SECS: f64 = 600.0;

fn timed(limit: f64, check: impl FnOnce() -> Check) -> Check {
    let started = Instant::now();
    let detail = check()?;
    let secs = started.elapsed().as_secs_f64();
    if secs < limit {
        Ok(format!("{detail}; {secs:.2}s"))
    } else {
        Err(format!("{detail}; took {secs:.2}s, limit {limit}s"))
    }
}

fn benchmark() -> Check {
    let started = Instant::now();
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for seed in SEEDS {
        let config = PipelineConfig { seed, ..PipelineConfig::default() };
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        synth_dataset(&SynthSpec::from_config(&config), dir.path()).map_err(|e| e.to_string())?;
        let dataset = Dataset::load(dir.path()).map_err(|e| e.to_string())?;
        let prepared = prepare(&dataset, &config, true).map_err(|e| e.to_string())?;
        let comparison = compare_prepared(&prepared, &config).map_err(|e| e.to_string())?;
        for row in comparison.rows {
            *sums.entry(row.method).or_default() += 100.0 * row.recognition_rate / SEEDS.len() as f64;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let r = |m: &str| sums.get(m).copied().unwrap_or(f64::NAN);
    let (mbda, bda, mda, geo) = (r("mbda"), r("twodbda_bda"), r("mda"), r("geometric_only"));
    let detail = format!(
        "mean R mbda {mbda:.1}, twodbda_bda {bda:.1}, mda {mda:.1}, geometric_only {geo:.1}; gap {:.1} pp; {secs:.0}s",
        mbda - geo
    );
    let ordered = mbda >= bda && mbda >= mda && mda >= geo;
    if ordered && mbda - geo >= 5.0 && secs < BUDGET_SECS {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn snapshot(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(out)
}

fn cli_run(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let data = root.join("data");
    let out = root.join("out");
    let steps: [Vec<&Path>; 3] = [
        vec![Path::new("synth"), Path::new("--dataset"), &data],
        vec![Path::new("train"), Path::new("--dataset"), &data, Path::new("--out"), &out],
        vec![
            Path::new("eval"),
            Path::new("--dataset"),
            &data,
            Path::new("--model"),
            &out,
            Path::new("--out"),
            &out,
        ],
    ];
    for args in steps {
        let status = Command::new(env!("CARGO_BIN_EXE_mbda"))
            .args(&args)
            .args(["--seed", "7"])
            .env("RUST_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
    }
    let mut files = snapshot(&data)?;
    for (k, v) in snapshot(&out)? {
        files.insert(format!("out/{k}"), v);
    }
    Ok(files)
}

fn determinism() -> Check {
    let (a, b) = (
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    );
    let (fa, fb) = (cli_run(a.path())?, cli_run(b.path())?);
    for name in ["out/model.bundle", "out/metrics.json", "out/table.txt", "manifest.json"] {
        if !fa.contains_key(name) {
            return Err(format!("missing {name}"));
        }
    }
    if fa.keys().ne(fb.keys()) {
        return Err("file sets differ".into());
    }
    let differing: Vec<&String> = fa.iter().filter(|(k, v)| fb[*k] != **v).map(|(k, _)| k).collect();
    match differing.first() {
        None => Ok(format!("{} files byte-identical", fa.len())),
        Some(name) => Err(format!("{} files differ, first {name}", differing.len())),
    }
}

fn main() {
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Check>)> = vec![
        ("tensor oracle suite", Box::new(|| timed(10.0, || common::check_tensor_suite(250, 1)))),
        ("generalized eigen suite", Box::new(|| timed(10.0, || common::check_eigen_suite(100, 2)))),
        ("distance ratio equals trace ratio", Box::new(|| common::check_ratio_identity(50, 3))),
        ("rank-1 monotonicity", Box::new(|| common::check_rank1_monotone(20, 4))),
        ("reduction equivalences", Box::new(|| common::check_reductions(10, 5))),
        ("metric replay", Box::new(common::check_metric_replay)),
        ("projection shape", Box::new(|| common::check_projection_shape(6))),
        ("synthetic benchmark ordering", Box::new(benchmark)),
        ("cli determinism", Box::new(determinism)),
        ("svm fixtures", Box::new(common::check_svm)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
