use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use figs::eval::{stability_scores, EvalReport};
use figs::synthetic::{generate, GenSpec};
use figs::theory::{rate_experiment, RateConfig};
use figs::weighting::read_external_weights;
use figs::{
    class_weights, fit_bagging_figs, fit_cart, fit_figs, fit_gfigs, Dataset, EnsembleConfig, FitConfig, GFigsConfig,
    GroupedDataset, MaxFeatures, MembershipConfig, MembershipSource, Task,
};
use serde_json::{json, Value};

use crate::artifact::{AnyModel, Method, ModelFile, MODEL_FILE_VERSION};
use crate::error::{compute, CliError, CliResult};
use crate::table::{read_table, write_numeric_csv, CsvSchema, Table};
use crate::{
    Command, CurveArgs, DataArgs, EvalArgs, FitArgs, ModelArgs, PredictArgs, RateArgs, StabilityArgs, SynthArgs,
    TaskArg,
};

/// Runs one command and returns the JSON document for stdout.
pub fn run(command: &Command) -> CliResult<String> {
    let value = match command {
        Command::Fit(a) => fit(a)?,
        Command::Predict(a) => predict(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Synth(a) => synth(a)?,
        Command::Stability(a) => stability(a)?,
        Command::Rate(a) => rate(a)?,
        Command::Curve(a) => curve(a)?,
    };
    Ok(serde_json::to_string_pretty(&value)?)
}

fn task(arg: TaskArg) -> Task {
    match arg {
        TaskArg::Reg => Task::Regression,
        TaskArg::Cls => Task::BinaryClassification,
    }
}

fn load(data: &DataArgs, model: &ModelArgs) -> CliResult<Table> {
    if model.method == Method::Gfigs && data.group_col.is_none() {
        return Err(CliError::input("--method gfigs requires --group-col"));
    }
    if model.method != Method::Gfigs && !model.group_weights.is_empty() {
        return Err(CliError::input("--group-weights only applies to --method gfigs"));
    }
    let schema = CsvSchema {
        target_column: Some(data.target.clone()),
        weight_column: data.weight_col.clone(),
        group_column: data.group_col.clone(),
        feature_columns: None,
    };
    let table = read_table(&data.input, &schema, true)?;
    if task(model.task) == Task::BinaryClassification {
        table.dataset.check_binary_targets()?;
    }
    Ok(table)
}

fn fit_config(args: &ModelArgs) -> FitConfig {
    FitConfig {
        task: task(args.task),
        max_splits: args.max_splits,
        min_impurity_decrease: args.min_impurity_decrease,
        min_samples_leaf: args.min_samples_leaf,
        allow_new_trees: true,
        backfit_iterations: args.backfit,
        seed: args.seed,
    }
}

fn resolve_features(names: &[String], list: &[String]) -> CliResult<Vec<usize>> {
    list.iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let s = s.trim();
            names
                .iter()
                .position(|n| n == s)
                .or_else(|| s.parse::<usize>().ok().filter(|&j| j < names.len()))
                .ok_or_else(|| CliError::input(format!("unknown feature `{s}`")))
        })
        .collect()
}

fn class_weighted(data: &Dataset) -> CliResult<Dataset> {
    let cw = class_weights(data.targets())?;
    let w: Vec<f64> = cw.iter().enumerate().map(|(i, c)| c * data.weight(i)).collect();
    Ok(data.clone().with_weights(w)?)
}

fn external_weights(specs: &[String], n: usize) -> CliResult<BTreeMap<String, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for spec in specs {
        let (group, path) =
            spec.split_once('=').ok_or_else(|| CliError::input(format!("--group-weights `{spec}` is not GROUP=PATH")))?;
        let file = File::open(path).map_err(|e| CliError::input(format!("{path}: {e}")))?;
        out.insert(group.to_string(), read_external_weights(file, n)?);
    }
    Ok(out)
}

/// Fits the configured method on `data` (with `table`'s groups, if any).
fn fit_model(table: &Table, data: &Dataset, args: &ModelArgs, max_splits: usize) -> CliResult<AnyModel> {
    let cfg = FitConfig { max_splits, ..fit_config(args) };
    let model = match args.method {
        Method::Figs | Method::Cart | Method::Bagging => {
            let weighted;
            let data = if args.class_weighted {
                weighted = class_weighted(data)?;
                &weighted
            } else {
                data
            };
            match args.method {
                Method::Figs => AnyModel::Figs(fit_figs(data, &cfg).map_err(compute)?.without_samples()),
                Method::Cart => AnyModel::Figs(fit_cart(data, &cfg).map_err(compute)?.without_samples()),
                _ => {
                    let max_features: MaxFeatures = args.max_features.parse()?;
                    let config = EnsembleConfig {
                        n_estimators: args.n_estimators,
                        max_features,
                        bootstrap: true,
                        base: cfg,
                        seed: args.seed,
                    };
                    AnyModel::Ensemble(fit_bagging_figs(data, &config).map_err(compute)?)
                }
            }
        }
        Method::Gfigs => {
            let groups = table.groups.clone().ok_or_else(|| CliError::input("--method gfigs requires --group-col"))?;
            let grouped = GroupedDataset::new(data.clone(), groups)?;
            let membership = if args.group_weights.is_empty() {
                MembershipSource::Logistic(MembershipConfig {
                    c: args.membership_l2,
                    excluded_features: resolve_features(&table.feature_names, &args.exclude_features)?,
                    ..MembershipConfig::default()
                })
            } else {
                MembershipSource::External(external_weights(&args.group_weights, data.n_samples())?)
            };
            let config = GFigsConfig { fit: cfg, membership, class_weighted: args.class_weighted };
            let mut model = fit_gfigs(&grouped, &config).map_err(compute)?;
            for m in model.per_group.values_mut() {
                *m = m.clone().without_samples();
            }
            AnyModel::Gfigs(model)
        }
    };
    Ok(model)
}

fn report(model: &AnyModel, table: &Table, levels: &[f64]) -> CliResult<EvalReport> {
    let (raw, out) = model.score(table)?;
    EvalReport::from_scores(model.task(), &raw, &out, table.dataset.targets(), levels, &model.structures())
        .map_err(compute)
}

/// Training metrics; AUC or R^2 is omitted when undefined on the data.
fn train_metrics(model: &AnyModel, table: &Table) -> CliResult<Value> {
    let (raw, out) = model.score(table)?;
    let y = table.dataset.targets();
    let mut m = serde_json::Map::new();
    m.insert("mse".into(), json!(figs::eval::mse(&out, y)));
    match model.task() {
        Task::Regression => {
            if let Ok(r2) = figs::eval::r2(&out, y) {
                m.insert("r2".into(), json!(r2));
            }
        }
        Task::BinaryClassification => {
            if let Ok(auc) = figs::eval::roc_auc(&raw, y) {
                m.insert("auc".into(), json!(auc));
            }
        }
    }
    Ok(Value::Object(m))
}

fn structure_summary(model: &AnyModel) -> Value {
    match model {
        AnyModel::Figs(m) => json!({
            "n_trees": m.n_trees(),
            "total_splits": m.total_splits(),
            "splits_per_tree": m.splits_per_tree(),
        }),
        AnyModel::Ensemble(e) => json!({
            "n_members": e.members.len(),
            "total_splits": e.members.iter().map(|m| m.total_splits()).sum::<usize>(),
            "n_trees": e.members.iter().map(|m| m.n_trees()).sum::<usize>(),
        }),
        AnyModel::Gfigs(g) => {
            let groups: BTreeMap<&String, Value> = g
                .per_group
                .iter()
                .map(|(k, m)| {
                    (k, json!({"n_trees": m.n_trees(), "total_splits": m.total_splits(), "splits_per_tree": m.splits_per_tree()}))
                })
                .collect();
            json!({
                "n_trees": g.per_group.values().map(|m| m.n_trees()).sum::<usize>(),
                "total_splits": g.per_group.values().map(|m| m.total_splits()).sum::<usize>(),
                "groups": groups,
            })
        }
    }
}

fn fit(args: &FitArgs) -> CliResult<Value> {
    let table = load(&args.data, &args.model)?;
    let model = fit_model(&table, &table.dataset, &args.model, args.model.max_splits)?;
    let mut summary = json!({
        "method": args.model.method.name(),
        "task": task(args.model.task),
        "n_samples": table.dataset.n_samples(),
        "n_features": table.dataset.n_features(),
        "train": train_metrics(&model, &table)?,
        "out": args.out.display().to_string(),
    });
    if let (Value::Object(s), Value::Object(extra)) = (&mut summary, structure_summary(&model)) {
        s.extend(extra);
    }
    let file = ModelFile {
        format_version: MODEL_FILE_VERSION,
        method: args.model.method,
        target_column: args.data.target.clone(),
        group_column: args.data.group_col.clone(),
        feature_names: table.feature_names.clone(),
        model,
    };
    file.write(&args.out)?;
    log::info!("model written to {}", args.out.display());
    Ok(summary)
}

fn model_table(file: &ModelFile, input: &Path, require_target: bool) -> CliResult<Table> {
    let schema = CsvSchema {
        target_column: Some(file.target_column.clone()),
        weight_column: None,
        group_column: file.group_column.clone(),
        feature_columns: Some(file.feature_names.clone()),
    };
    read_table(input, &schema, require_target)
}

fn predict(args: &PredictArgs) -> CliResult<Value> {
    let file = ModelFile::read(&args.model)?;
    let table = model_table(&file, &args.input, false)?;
    let (raw, out) = file.model.score(&table)?;
    let rows: Vec<Vec<f64>> = raw.iter().zip(&out).map(|(r, o)| vec![*r, *o]).collect();
    let sink = File::create(&args.out).map_err(|e| CliError::input(format!("{}: {e}", args.out.display())))?;
    write_numeric_csv(sink, &["raw_score", "prediction"], &rows)?;
    Ok(json!({ "n_predictions": rows.len(), "out": args.out.display().to_string() }))
}

fn eval(args: &EvalArgs) -> CliResult<Value> {
    let file = ModelFile::read(&args.model)?;
    let table = model_table(&file, &args.input, true)?;
    Ok(serde_json::to_value(report(&file.model, &table, &args.levels)?)?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn synth(args: &SynthArgs) -> CliResult<Value> {
    let spec: GenSpec = read_json(&args.spec)?;
    let data = generate(&spec)?;
    let ds = &data.dataset;
    let mut wtr = csv::Writer::from_path(&args.out)?;
    let mut header: Vec<String> = (0..ds.n_features()).map(|j| format!("x{j}")).collect();
    if data.groups.is_some() {
        header.push("group".into());
    }
    header.push("y".into());
    wtr.write_record(&header)?;
    for i in 0..ds.n_samples() {
        let mut record: Vec<String> = ds.row(i).iter().map(f64::to_string).collect();
        if let Some(g) = &data.groups {
            record.push(g[i].clone());
        }
        record.push(ds.targets()[i].to_string());
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    let sidecar = args.out.with_extension("spec.json");
    std::fs::write(&sidecar, serde_json::to_string_pretty(&spec)? + "\n")?;
    Ok(json!({
        "n_samples": ds.n_samples(),
        "n_features": ds.n_features(),
        "out": args.out.display().to_string(),
        "spec": sidecar.display().to_string(),
    }))
}

fn stability(args: &StabilityArgs) -> CliResult<Value> {
    let table = load(&args.data, &args.model)?;
    if args.seeds == 0 {
        return Err(CliError::input("--seeds must be >= 1"));
    }
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|k| args.model.seed.wrapping_add(k)).collect();
    let fit = |data: &Dataset| -> figs::Result<BTreeSet<usize>> {
        fit_model(&table, data, &args.model, args.model.max_splits)
            .map(|m| m.split_features())
            .map_err(|e| figs::FigsError::InvalidData(e.to_string()))
    };
    let mut results = Vec::new();
    for &p in &args.p {
        let scores = stability_scores(&table.dataset, p, &seeds, fit).map_err(compute)?;
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        results.push(json!({ "p": p, "scores": scores, "mean": mean }));
    }
    Ok(json!({ "method": args.model.method.name(), "seeds": seeds, "results": results }))
}

fn rate(args: &RateArgs) -> CliResult<Value> {
    let config: RateConfig = read_json(&args.config)?;
    let report = rate_experiment(&config).map_err(compute)?;
    if let Some(out) = &args.out {
        let rows: Vec<Vec<f64>> = report.rows.iter().map(|r| vec![r.n as f64, r.mean_mse, r.empty_fraction]).collect();
        let sink = File::create(out).map_err(|e| CliError::input(format!("{}: {e}", out.display())))?;
        write_numeric_csv(sink, &["n", "mean_mse", "empty_fraction"], &rows)?;
    }
    Ok(serde_json::to_value(report)?)
}

fn curve(args: &CurveArgs) -> CliResult<Value> {
    let train = load(&args.data, &args.model)?;
    let test_schema = CsvSchema {
        target_column: Some(args.data.target.clone()),
        weight_column: None,
        group_column: args.data.group_col.clone(),
        feature_columns: Some(train.feature_names.clone()),
    };
    let test = read_table(&args.test, &test_schema, true)?;
    let dataset = args.data.input.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let mut rows = Vec::new();
    let mut csv_rows = Vec::new();
    for &method in &args.methods {
        let margs = ModelArgs { method, ..args.model.clone() };
        if method == Method::Gfigs && train.groups.is_none() {
            return Err(CliError::input("gfigs requires --group-col"));
        }
        for &budget in &args.budgets {
            let model = fit_model(&train, &train.dataset, &margs, budget)?;
            let r = report(&model, &test, &[])?;
            let metric = r.auc.or(r.r2).unwrap_or(f64::NAN);
            csv_rows.push(vec![dataset.clone(), method.name().to_string(), budget.to_string(), metric.to_string(), r.mse.to_string()]);
            rows.push(json!({
                "dataset": dataset,
                "method": method.name(),
                "max_splits": budget,
                "metric": metric,
                "mse": r.mse,
                "n_trees": r.n_trees,
            }));
        }
    }
    if let Some(out) = &args.out {
        let mut wtr = csv::Writer::from_path(out)?;
        wtr.write_record(["dataset", "method", "max_splits", "metric", "mse"])?;
        for r in &csv_rows {
            wtr.write_record(r)?;
        }
        wtr.flush()?;
    }
    Ok(Value::Array(rows))
}
