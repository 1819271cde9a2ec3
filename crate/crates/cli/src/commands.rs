use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rebalance::config::{hash_json, write_json, Artifact, FileDigest, Manifest, RunConfig};
use rebalance::dataset::{load_csv_with, preprocess, LabeledDataset, PreprocessReport};
use rebalance::evaluation::run_benchmark;
use rebalance::pipeline::{undersample as run_undersample, CostModel, Method, MethodReport};
use rebalance::synth::{gen_synth as synthesize, SynthConfig};
use rebalance::validation::{validate_subset_with, ValidationReport};
use rebalance::{Error, Result};
use serde::Serialize;

use crate::{
    BenchArgs, GenSynthArgs, IngestArgs, PreprocessFlags, RunFlags, UndersampleArgs, ValidateArgs,
};

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_dataset_csv(path: &Path, data: &LabeledDataset, label_column: &str) -> Result<()> {
    let mut out = create(path)?;
    data.write_csv(&mut out, label_column)?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Refuses to run when any output path names one of the inputs.
fn guard_inputs(inputs: &[&Path], outputs: &[PathBuf]) -> Result<()> {
    for input in inputs {
        let Ok(input) = input.canonicalize() else {
            continue;
        };
        for output in outputs {
            if output.canonicalize().is_ok_and(|o| o == input) {
                return Err(Error::config(format!(
                    "output {} would overwrite an input file",
                    output.display()
                )));
            }
        }
    }
    Ok(())
}

fn class_counts(data: &LabeledDataset) -> BTreeMap<String, usize> {
    data.class_counts()
        .iter()
        .map(|(&c, &n)| (data.class_names()[c].clone(), n))
        .collect()
}

fn apply_preprocess_flags(config: &mut RunConfig, flags: &PreprocessFlags) {
    if flags.keep_duplicates {
        config.preprocess.drop_duplicates = false;
    }
    if flags.drop_missing {
        config.preprocess.impute = false;
    }
}

fn load(config: &RunConfig) -> Result<(usize, LabeledDataset, PreprocessReport)> {
    let table = load_csv_with(
        &config.input,
        &config.label_column,
        &config.preprocess.load_options(),
    )?;
    let (data, report) = preprocess(&table, config.preprocess.policy())?;
    Ok((table.n_rows(), data, report))
}

/// Builds the effective config: manifest or TOML file first, then flags.
fn resolve(flags: &RunFlags, command: &str) -> Result<RunConfig> {
    let mut config = if let Some(path) = &flags.replay {
        let manifest = Manifest::load(path)?;
        if manifest.command != command {
            return Err(Error::config(format!(
                "manifest records a {:?} run, not {command:?}",
                manifest.command
            )));
        }
        manifest.config
    } else if let Some(path) = &flags.config {
        RunConfig::from_toml_file(path)?
    } else {
        let input = flags
            .input
            .clone()
            .ok_or_else(|| Error::config("--input is required without --config or --replay"))?;
        let label = flags.label_column.clone().ok_or_else(|| {
            Error::config("--label-column is required without --config or --replay")
        })?;
        RunConfig::new(input, label)
    };

    if let Some(input) = &flags.input {
        config.input = input.clone();
    }
    if let Some(label) = &flags.label_column {
        config.label_column = label.clone();
    }
    if let Some(seed) = flags.seed {
        config.seed = seed;
    }
    if let Some(dir) = &flags.out_dir {
        config.output_dir = dir.clone();
    }
    apply_preprocess_flags(&mut config, &flags.preprocess);

    let mi_flags = flags.n_bins.is_some()
        || flags.k_min.is_some()
        || flags.k_max.is_some()
        || flags.allocation.is_some()
        || flags.cost_model.is_some()
        || flags.costs.is_some();
    if mi_flags {
        let mi = config.mi.get_or_insert_with(Default::default);
        if let Some(b) = flags.n_bins {
            mi.n_bins = Some(b);
        }
        if let Some(k) = flags.k_min {
            mi.k_min = k;
        }
        if let Some(k) = flags.k_max {
            mi.k_max = k;
        }
        if let Some(a) = flags.allocation {
            mi.allocation = a.into();
        }
        if let Some(c) = flags.cost_model {
            mi.cost_model = c.into();
        }
        if let Some(costs) = &flags.costs {
            mi.cost_model = CostModel::Custom(costs.clone());
        }
    }

    let sp_flags = flags.m.is_some()
        || flags.max_iter.is_some()
        || flags.eta.is_some()
        || flags.subset_target.is_some();
    if sp_flags {
        let sp = config.support_points.get_or_insert_with(Default::default);
        if let Some(m) = flags.m {
            sp.m = Some(m);
        }
        if let Some(n) = flags.max_iter {
            sp.max_iter = n;
        }
        if let Some(eta) = flags.eta {
            sp.eta = Some(eta);
        }
        if let Some(t) = flags.subset_target {
            sp.subset_target = t;
        }
    }
    Ok(config)
}

fn finish_manifest(
    command: &str,
    config: &RunConfig,
    inputs: &[&Path],
    outputs: &[PathBuf],
) -> Result<PathBuf> {
    let mut manifest = Manifest::new(command, config);
    for path in inputs {
        manifest.inputs.push(FileDigest::of(path)?);
    }
    for path in outputs {
        manifest.outputs.push(FileDigest::of(path)?);
    }
    let path = config.output_dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

#[derive(Serialize)]
struct IngestSettings<'a> {
    input: &'a Path,
    label_column: &'a str,
    drop_duplicates: bool,
    impute: bool,
}

#[derive(Serialize)]
struct IngestSummary {
    input_rows: usize,
    output_rows: usize,
    class_counts: BTreeMap<String, usize>,
    preprocess: PreprocessReport,
}

pub fn ingest(args: IngestArgs) -> Result<()> {
    let mut config = RunConfig::new(&args.input, &args.label_column);
    apply_preprocess_flags(&mut config, &args.preprocess);
    let clean_path = args.out_dir.join("clean.csv");
    let report_path = args.out_dir.join("preprocess.json");
    guard_inputs(&[&args.input], &[clean_path.clone(), report_path.clone()])?;

    let (input_rows, data, report) = load(&config)?;
    ensure_dir(&args.out_dir)?;
    write_dataset_csv(&clean_path, &data, &args.label_column)?;
    let settings = IngestSettings {
        input: &args.input,
        label_column: &args.label_column,
        drop_duplicates: config.preprocess.drop_duplicates,
        impute: config.preprocess.impute,
    };
    let summary = IngestSummary {
        input_rows,
        output_rows: data.n_rows(),
        class_counts: class_counts(&data),
        preprocess: report,
    };
    write_json(
        &report_path,
        &Artifact::new(0, hash_json(&settings), summary),
    )?;
    println!(
        "ingested {input_rows} rows -> {} rows, {} features; wrote {}",
        data.n_rows(),
        data.n_features(),
        clean_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct UndersampleSummary {
    method: Method,
    input_rows: usize,
    rows_after_preprocess: usize,
    majority_class: String,
    minority_class: String,
    majority_size: usize,
    minority_size: usize,
    output_class_counts: BTreeMap<String, usize>,
    /// Kept rows, as indices into the majority class after preprocessing.
    majority_indices: Vec<usize>,
    preprocess: PreprocessReport,
    report: MethodReport,
}

pub fn undersample(args: UndersampleArgs) -> Result<()> {
    let mut config = resolve(&args.run, "undersample")?;
    if let Some(m) = args.method {
        config.method = m.into();
    }
    config.validate_for_undersample()?;

    let dir = config.output_dir.clone();
    let balanced_path = dir.join("balanced.csv");
    let report_path = dir.join("report.json");
    let trace_path = dir.join("energy_trace.csv");
    let points_path = dir.join("support_points.csv");
    let manifest_path = dir.join("manifest.json");
    guard_inputs(
        &[&config.input],
        &[
            balanced_path.clone(),
            report_path.clone(),
            trace_path.clone(),
            points_path.clone(),
            manifest_path,
        ],
    )?;

    let (input_rows, data, prep) = load(&config)?;
    let outcome = run_undersample(&data, config.method, &config.method_configs(), config.seed)?;
    let majority = data
        .majority_class()
        .expect("preprocessed data is non-empty");
    let minority = data
        .class_counts()
        .keys()
        .copied()
        .find(|&c| c != majority)
        .ok_or_else(|| Error::data("need two classes"))?;

    ensure_dir(&dir)?;
    write_dataset_csv(&balanced_path, &outcome.dataset, &config.label_column)?;
    let mut outputs = vec![balanced_path.clone()];
    if let Some(support) = &outcome.support {
        let mut out = create(&trace_path)?;
        support.write_trace_csv(&mut out)?;
        out.flush().map_err(|e| Error::io(&trace_path, e))?;
        let mut out = create(&points_path)?;
        support.write_points_csv(&mut out, data.feature_names())?;
        out.flush().map_err(|e| Error::io(&points_path, e))?;
        outputs.push(trace_path);
        outputs.push(points_path);
    }
    let summary = UndersampleSummary {
        method: config.method,
        input_rows,
        rows_after_preprocess: data.n_rows(),
        majority_class: data.class_names()[majority].clone(),
        minority_class: data.class_names()[minority].clone(),
        majority_size: outcome.majority_size,
        minority_size: outcome.minority_size,
        output_class_counts: class_counts(&outcome.dataset),
        majority_indices: outcome.majority_indices,
        preprocess: prep,
        report: outcome.report,
    };
    write_json(&report_path, &Artifact::for_run(&config, summary))?;
    outputs.push(report_path);
    finish_manifest("undersample", &config, &[&config.input], &outputs)?;

    println!(
        "{}: kept {} of {} majority rows plus {} minority rows; wrote {}",
        config.method,
        outcome.minority_size,
        outcome.majority_size,
        outcome.minority_size,
        balanced_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ValidateSettings<'a> {
    original: &'a Path,
    subset: &'a Path,
    label_column: &'a str,
    class: Option<&'a str>,
    alpha: f64,
    drop_duplicates: bool,
    impute: bool,
}

#[derive(Serialize)]
struct ValidationSummary {
    /// Class compared, or `None` when every row was used.
    class: Option<String>,
    original_rows: usize,
    subset_rows: usize,
    report: ValidationReport,
}

fn rows_named(data: &LabeledDataset, name: &str, which: &Path) -> Result<LabeledDataset> {
    let class = data
        .class_names()
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| {
            Error::data(format!(
                "class {name:?} does not occur in {}",
                which.display()
            ))
        })?;
    Ok(data.select(&data.rows_of_class(class)))
}

pub fn validate(args: ValidateArgs) -> Result<()> {
    let json_path = args.out_dir.join("validation.json");
    let text_path = args.out_dir.join("validation.txt");
    guard_inputs(
        &[&args.original, &args.subset],
        &[json_path.clone(), text_path.clone()],
    )?;

    let mut original_config = RunConfig::new(&args.original, &args.label_column);
    apply_preprocess_flags(&mut original_config, &args.preprocess);
    let mut subset_config = original_config.clone();
    subset_config.input = args.subset.clone();
    let (_, original, _) = load(&original_config)?;
    let (_, subset, _) = load(&subset_config)?;

    let class = if args.all_rows {
        None
    } else if let Some(name) = &args.class {
        Some(name.clone())
    } else {
        let majority = original
            .majority_class()
            .expect("preprocessed data is non-empty");
        Some(original.class_names()[majority].clone())
    };
    let (original, subset) = match &class {
        Some(name) => (
            rows_named(&original, name, &args.original)?,
            rows_named(&subset, name, &args.subset)?,
        ),
        None => (original, subset),
    };
    if original.feature_names() != subset.feature_names() {
        return Err(Error::data(
            "original and subset have different feature columns",
        ));
    }

    let report = validate_subset_with(&original, &subset, args.alpha)?;
    let text = report.to_text();
    let settings = ValidateSettings {
        original: &args.original,
        subset: &args.subset,
        label_column: &args.label_column,
        class: class.as_deref(),
        alpha: args.alpha,
        drop_duplicates: original_config.preprocess.drop_duplicates,
        impute: original_config.preprocess.impute,
    };
    let config_hash = hash_json(&settings);
    let summary = ValidationSummary {
        class,
        original_rows: original.n_rows(),
        subset_rows: subset.n_rows(),
        report,
    };
    ensure_dir(&args.out_dir)?;
    write_json(&json_path, &Artifact::new(0, config_hash, summary))?;
    write_text(&text_path, &text)?;
    print!("{text}");
    Ok(())
}

pub fn bench(args: BenchArgs) -> Result<()> {
    let mut config = resolve(&args.run, "bench")?;
    let section = config.bench.get_or_insert_with(Default::default);
    if let Some(methods) = &args.methods {
        section.methods = methods.iter().map(|&m| m.into()).collect();
    }
    if let Some(seeds) = &args.seeds {
        section.seeds = seeds.clone();
    }
    if let Some(n) = args.n_seeds {
        section.seeds = (0..n).collect();
    }
    if let Some(f) = args.test_fraction {
        section.test_fraction = f;
    }
    config.validate_sections()?;

    let dir = config.output_dir.clone();
    let csv_path = dir.join("bench.csv");
    let json_path = dir.join("bench.json");
    let text_path = dir.join("bench.txt");
    guard_inputs(
        &[&config.input],
        &[
            csv_path.clone(),
            json_path.clone(),
            text_path.clone(),
            dir.join("manifest.json"),
        ],
    )?;

    let (_, data, _) = load(&config)?;
    let section = config.bench_section();
    let table = run_benchmark(
        &data,
        &section.methods,
        &section.seeds,
        &config.benchmark_config(),
    )?;

    ensure_dir(&dir)?;
    let mut out = create(&csv_path)?;
    table.write_csv(&mut out)?;
    out.flush().map_err(|e| Error::io(&csv_path, e))?;
    write_json(&json_path, &Artifact::for_run(&config, &table))?;
    let text = table.to_text();
    write_text(&text_path, &text)?;
    finish_manifest(
        "bench",
        &config,
        &[&config.input],
        &[csv_path, json_path, text_path],
    )?;
    print!("{text}");
    Ok(())
}

pub fn gen_synth(args: GenSynthArgs) -> Result<()> {
    let config = SynthConfig {
        n: args.n,
        d: args.d,
        imbalance: args.imbalance,
        clusters: args.clusters,
        separation: args.separation,
        seed: args.seed,
    };
    let data = synthesize(&config)?;
    if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_dataset_csv(&args.output, &data, &args.label_column)?;
    let counts = data.class_counts();
    println!(
        "wrote {} rows ({} majority, {} minority) to {}",
        data.n_rows(),
        counts[&0],
        counts[&1],
        args.output.display()
    );
    Ok(())
}
