//! Model-fitting subcommands.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use netchoice_core::choices::{read_choice_set, temporal_split, ChoiceSet, TimeWindow};
use netchoice_core::design::{Formula, Frame};
use netchoice_core::estimators::{
    coefficient_table, f_test_nested, logistic_fit, lr_test_nested, mnl_accuracy, mnl_fit, odds_ratio, ols_fit,
    FitResult, TestResult,
};
use netchoice_core::labelshift::{
    confusion_from_holdout, estimate_shift, fold_proportion, predicted_marginal, ConfusionJoint, FoldSummary,
    ShiftEstimate,
};
use netchoice_core::{authors::cohens_kappa, IdTables, Timestamp};
use serde::Serialize;

use crate::commands::choices_hash;
use crate::config::{ConfigHasher, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::OutDir;
use crate::pipeline;
use crate::ModelArgs;

fn odds_ratios(fit: &FitResult) -> BTreeMap<String, f64> {
    fit.feature_names
        .iter()
        .zip(&fit.coefficients)
        .map(|(n, &b)| (n.clone(), odds_ratio(b)))
        .collect()
}

#[derive(Serialize)]
struct MnlDoc {
    fit: FitResult,
    odds_ratios: BTreeMap<String, f64>,
    window: TimeWindow,
    split_boundary: Timestamp,
    train_instances: usize,
    test_instances: usize,
    train_accuracy: f64,
    /// Absent when the test segment is empty.
    test_accuracy: Option<f64>,
}

fn load_choices(cfg: &RunConfig) -> CliResult<ChoiceSet> {
    match cfg.input("choices") {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| CliError::Validation(format!("cannot open {}: {e}", path.display())))?;
            Ok(read_choice_set(BufReader::new(file), &mut IdTables::new())?)
        }
        None => Ok(pipeline::choice_sets(cfg)?.1.set),
    }
}

pub fn fit_mnl(cfg: &RunConfig) -> CliResult<()> {
    let hash = choices_hash("fit-mnl", cfg)?.finish();
    let set = load_choices(cfg)?;
    if set.instances.is_empty() {
        return Err(CliError::Validation("no choice instances to fit".into()));
    }
    // default window: the observed span of instance times
    let window = match cfg.window {
        Some(w) => w,
        None => {
            let lo = set.instances.iter().map(|i| i.time).min().unwrap_or(0);
            let hi = set.instances.iter().map(|i| i.time).max().unwrap_or(0);
            TimeWindow::new(lo, hi + 1)?
        }
    };
    let (train, test) = temporal_split(&set.instances, window, cfg.train_frac)?;
    if train.is_empty() {
        return Err(CliError::Validation("training segment of the window holds no instances".into()));
    }
    let fit = mnl_fit(&train, &set.feature_names, cfg.tol, cfg.max_iter)?;
    let doc = MnlDoc {
        odds_ratios: odds_ratios(&fit),
        window,
        split_boundary: window.split_point(cfg.train_frac),
        train_instances: train.len(),
        test_instances: test.len(),
        train_accuracy: mnl_accuracy(&fit.coefficients, &train)?,
        test_accuracy: if test.is_empty() { None } else { Some(mnl_accuracy(&fit.coefficients, &test)?) },
        fit,
    };
    let mut out = OutDir::create(&cfg.out_dir, hash)?;
    out.json("mnl_fit.json", &doc)?;
    out.stamped("mnl_table.txt", |w| {
        write!(w, "{}", coefficient_table(&doc.fit))?;
        writeln!(
            w,
            "train instances = {}, test instances = {}, test accuracy = {}",
            doc.train_instances,
            doc.test_instances,
            doc.test_accuracy.map_or("n/a".to_string(), |a| format!("{a:.4}"))
        )
    })?;
    if !doc.fit.converged {
        return Err(CliError::Numerical(format!(
            "conditional logit did not converge in {} iterations (max |gradient| {:.3e})",
            doc.fit.iterations, doc.fit.gradient_max_abs
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linear {
    Logistic,
    Ols,
}

#[derive(Serialize)]
struct FormulaDoc {
    formula: String,
    fit: FitResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    odds_ratios: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reduced_formula: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reduced: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nested_test: Option<TestResult>,
}

pub fn fit_formula(cfg: &RunConfig, args: &ModelArgs, kind: Linear) -> CliResult<()> {
    let (command, stem) = match kind {
        Linear::Logistic => ("fit-logit", "logit"),
        Linear::Ols => ("fit-ols", "ols"),
    };
    let mut hasher = ConfigHasher::new(command, cfg)
        .input("data", &args.data)?
        .param("formula", &args.formula);
    if let Some(r) = &args.reduced {
        hasher = hasher.param("reduced", r);
    }
    let hash = hasher.finish();
    let frame = Frame::read_csv(&args.data)?;
    let fit_one = |text: &str| -> CliResult<FitResult> {
        let (design, y) = Formula::parse(text)?.build(&frame)?;
        Ok(match kind {
            Linear::Logistic => logistic_fit(&design, &y, cfg.tol, cfg.max_iter)?,
            Linear::Ols => ols_fit(&design, &y)?,
        })
    };
    let fit = fit_one(&args.formula)?;
    let reduced = args.reduced.as_deref().map(fit_one).transpose()?;
    let nested_test = match &reduced {
        Some(r) => Some(match kind {
            Linear::Logistic => lr_test_nested(&fit, r)?,
            Linear::Ols => f_test_nested(&fit, r)?,
        }),
        None => None,
    };
    let doc = FormulaDoc {
        formula: args.formula.clone(),
        odds_ratios: (kind == Linear::Logistic).then(|| odds_ratios(&fit)),
        fit,
        reduced_formula: args.reduced.clone(),
        reduced,
        nested_test,
    };
    let mut out = OutDir::create(&cfg.out_dir, hash)?;
    out.json(&format!("{stem}_fit.json"), &doc)?;
    out.stamped(&format!("{stem}_table.txt"), |w| {
        writeln!(w, "{}", doc.formula)?;
        write!(w, "{}", coefficient_table(&doc.fit))?;
        if let (Some(r), Some(t)) = (&doc.reduced_formula, &doc.nested_test) {
            let name = if kind == Linear::Ols { "F" } else { "LR chi2" };
            let df = match t.df_den {
                Some(d) => format!("{}, {}", t.df_num, d),
                None => t.df_num.to_string(),
            };
            writeln!(w, "nested test vs `{r}`: {name}({df}) = {:.4}, p = {:.4e}", t.statistic, t.p_value)?;
        }
        Ok(())
    })?;
    if !doc.fit.converged {
        return Err(CliError::Numerical(format!("{command} did not converge")));
    }
    Ok(())
}

fn column<'a>(frame: &'a Frame, name: &str, path: &Path) -> CliResult<&'a [String]> {
    frame
        .columns
        .iter()
        .position(|c| c == name)
        .map(|j| frame.values[j].as_slice())
        .ok_or_else(|| CliError::Validation(format!("{} lacks column `{name}`", path.display())))
}

#[derive(Serialize)]
struct BbseDoc {
    classes: Vec<String>,
    confusion: ConfusionJoint,
    source_prior: Vec<f64>,
    estimate: ShiftEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    folds: Option<FoldSummary>,
}

fn read_marginal(path: &Path, classes: &[String]) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let bad = || CliError::Validation(format!("{}: marginal must be a number array or label→number object", path.display()));
    match value {
        serde_json::Value::Array(items) => {
            if items.len() != classes.len() {
                return Err(CliError::Validation(format!(
                    "marginal has {} entries for {} classes",
                    items.len(),
                    classes.len()
                )));
            }
            items.iter().map(|v| v.as_f64().ok_or_else(bad)).collect()
        }
        serde_json::Value::Object(map) => {
            if let Some(extra) = map.keys().find(|k| !classes.contains(k)) {
                return Err(CliError::Validation(format!("marginal names unknown class `{extra}`")));
            }
            classes
                .iter()
                .map(|c| map.get(c).map_or(Ok(0.0), |v| v.as_f64().ok_or_else(bad)))
                .collect()
        }
        _ => Err(bad()),
    }
}

pub fn bbse(
    cfg: &RunConfig,
    holdout: &Path,
    target: Option<&Path>,
    marginal: Option<&Path>,
    folds: Option<&Path>,
) -> CliResult<()> {
    let mut hasher = ConfigHasher::new("bbse", cfg).input("holdout", holdout)?;
    for (key, p) in [("target", target), ("marginal", marginal), ("folds", folds)] {
        if let Some(p) = p {
            hasher = hasher.input(key, p)?;
        }
    }
    let hash = hasher.finish();

    let frame = Frame::read_csv(holdout)?;
    let preds = column(&frame, "prediction", holdout)?;
    let labels = column(&frame, "label", holdout)?;
    let target_frame = target.map(Frame::read_csv).transpose()?;
    let target_preds = match (&target_frame, target) {
        (Some(f), Some(p)) => Some(column(f, "prediction", p)?),
        _ => None,
    };
    let mut classes: BTreeSet<String> = labels.iter().chain(preds).cloned().collect();
    if let Some(tp) = target_preds {
        classes.extend(tp.iter().cloned());
    }
    let classes: Vec<String> = classes.into_iter().collect();
    let index = |s: &String| classes.binary_search(s).unwrap_or_default();
    let p_idx: Vec<usize> = preds.iter().map(index).collect();
    let l_idx: Vec<usize> = labels.iter().map(index).collect();
    let confusion = confusion_from_holdout(&p_idx, &l_idx, classes.len())?;
    let mu = match (target_preds, marginal) {
        (Some(tp), _) => predicted_marginal(&tp.iter().map(index).collect::<Vec<_>>(), classes.len())?,
        (None, Some(m)) => read_marginal(m, &classes)?,
        (None, None) => return Err(CliError::Validation("bbse needs --target or --marginal".into())),
    };
    let estimate = estimate_shift(&confusion, &mu)?;
    let folds = match folds {
        Some(p) => {
            let f = Frame::read_csv(p)?;
            let values = column(&f, "estimate", p)?
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| CliError::Validation(format!("bad fold estimate `{v}`"))))
                .collect::<CliResult<Vec<_>>>()?;
            Some(fold_proportion(&values)?)
        }
        None => None,
    };
    let doc = BbseDoc {
        source_prior: confusion.column_sums(),
        classes,
        confusion,
        estimate,
        folds,
    };
    let mut out = OutDir::create(&cfg.out_dir, hash)?;
    out.json("bbse.json", &doc)?;
    Ok(())
}

#[derive(Serialize)]
struct KappaDoc {
    columns: Vec<String>,
    n: usize,
    kappa: f64,
}

pub fn kappa(cfg: &RunConfig, labels: &Path, columns: &[String]) -> CliResult<()> {
    if columns.len() != 2 {
        return Err(CliError::Usage("--columns takes exactly two names".into()));
    }
    let hash = ConfigHasher::new("kappa", cfg)
        .input("labels", labels)?
        .param("columns", columns.join(","))
        .finish();
    let frame = Frame::read_csv(labels)?;
    let a = column(&frame, &columns[0], labels)?;
    let b = column(&frame, &columns[1], labels)?;
    let doc = KappaDoc {
        columns: columns.to_vec(),
        n: a.len(),
        kappa: cohens_kappa(a, b)?,
    };
    let mut out = OutDir::create(&cfg.out_dir, hash)?;
    out.json("kappa.json", &doc)?;
    Ok(())
}
