//! `.swid` parsing and the subcommands of the `swid` tool.

pub mod dsl;

use rust_decimal::Decimal;
use serde_json::{json, Value};
use swid_core::dist::Backend;
use swid_core::{
    build_swig, check_positivity, factual_law, g_formula, identify, plugin_estimate, sample, IdentError, IdentOptions,
    IdentReport, Prob, Regime, Scalar, Source, SCENARIOS,
};

pub use dsl::{expectations, parse_model, write_model, DslError, ModelFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_SEMANTIC: i32 = 3;
pub const EXIT_POSITIVITY: i32 = 4;
pub const EXIT_EXCHANGEABILITY: i32 = 5;

/// What a subcommand produced: text for standard output, an optional
/// diagnostic for standard error, and the exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self {
            code: EXIT_OK,
            stdout,
            stderr: String::new(),
        }
    }

    fn fail(code: i32, stderr: impl Into<String>) -> Self {
        Self {
            code,
            stdout: String::new(),
            stderr: stderr.into(),
        }
    }
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Parses model text, mapping syntax errors to exit 2 and semantic ones to 3.
pub fn load(text: &str) -> Result<ModelFile, Outcome> {
    parse_model(text).map_err(|e| {
        let code = match e {
            DslError::Syntax { .. } => EXIT_PARSE,
            DslError::Semantic { .. } => EXIT_SEMANTIC,
        };
        Outcome::fail(code, e.to_string())
    })
}

fn semantic(e: impl ToString) -> Outcome {
    Outcome::fail(EXIT_SEMANTIC, e.to_string())
}

/// `R=1,S=1,Z=z` into a regime over `model`'s graph.
pub fn parse_regime_arg(model: &ModelFile, arg: &str) -> Result<Regime, String> {
    let mut steps = Vec::new();
    for part in arg.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("regime step {part:?} is not of the form VAR=VALUE"))?;
        steps.push((k.trim(), v.trim()));
    }
    let r = Regime::from_tokens(&model.dag, &steps).map_err(|e| e.to_string())?;
    r.check_order(&model.dag).map_err(|e| e.to_string())?;
    Ok(r)
}

pub fn cmd_swig(model: &ModelFile, regime: Option<&str>) -> Outcome {
    let template = match regime {
        Some(arg) => parse_regime_arg(model, arg),
        None => model.resolve_template(),
    };
    let template = match template {
        Ok(t) => t,
        Err(e) => return semantic(e),
    };
    match build_swig(&model.dag, &template) {
        Ok(s) => Outcome::ok(s.to_dot()),
        Err(e) => semantic(e),
    }
}

fn claim_entries(model: &ModelFile, template: &Regime, claims: &[dsl::Claim]) -> Result<Vec<Value>, String> {
    let swig = build_swig(&model.dag, template).map_err(|e| e.to_string())?;
    claims
        .iter()
        .map(|c| {
            let holds = swig
                .d_separated_by_base(&c.left, &c.right, &c.given)
                .map_err(|e| e.to_string())?;
            let render = |names: &[String]| {
                names
                    .iter()
                    .map(|n| swig.label_of(n).map(ToString::to_string).unwrap_or_else(|| n.clone()))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            let mut condition = format!("{} ⊥ {}", render(&c.left), render(&c.right));
            if !c.given.is_empty() {
                condition.push_str(&format!(" | {}", render(&c.given)));
            }
            Ok(json!({"condition": condition, "holds": holds}))
        })
        .collect()
}

/// Exchangeability conditions, user claims and (given numbers) positivity.
/// Exit 4 on a positivity failure, otherwise 5 if any condition or claim
/// fails.
pub fn cmd_check(model: &ModelFile) -> Outcome {
    let r = match model.resolve() {
        Ok(r) => r,
        Err(e) => return semantic(e),
    };
    let conditions = match swid_core::derive_exchangeability(&model.dag, &r.template, &r.spec.outcome) {
        Ok(c) => c,
        Err(e) => return semantic(e),
    };
    let claims = match claim_entries(model, &r.template, &r.claims) {
        Ok(c) => c,
        Err(e) => return semantic(e),
    };
    let law = match (&model.scm, &model.dist) {
        (Some(scm), _) => match factual_law(scm) {
            Ok(l) => Some(l),
            Err(e) => return semantic(e),
        },
        (None, Some(d)) => Some(d.clone()),
        (None, None) => None,
    };
    let positivity = match &law {
        Some(l) => match check_positivity(l, &r.spec) {
            Ok(p) => Some(p),
            Err(e) => return semantic(e),
        },
        None => None,
    };
    let exchangeability: Vec<Value> = conditions
        .iter()
        .map(|c| {
            let mut v = json!({"condition": c.to_string(), "holds": c.holds});
            if let Some(w) = &c.warning {
                v["warning"] = json!(w);
            }
            v
        })
        .collect();
    let all_hold = conditions.iter().all(|c| c.holds) && claims.iter().all(|c| c["holds"] == json!(true));
    let positive = positivity.as_ref().is_none_or(|p| p.pass);
    let out = json!({
        "scenario": r.scenario,
        "regime": r.template.to_string(),
        "exchangeability": exchangeability,
        "claims": claims,
        "positivity": positivity.as_ref().map(|p| p.to_json()),
    });
    let code = if !positive {
        EXIT_POSITIVITY
    } else if !all_hold {
        EXIT_EXCHANGEABILITY
    } else {
        EXIT_OK
    };
    Outcome {
        code,
        stdout: pretty(&out),
        stderr: String::new(),
    }
}

#[derive(Debug, Clone, Default)]
pub struct IdentifyArgs {
    /// Outcome levels by label; the query's thresholds when absent.
    pub thresholds: Option<Vec<String>>,
    /// Exit 5 when an exchangeability condition fails.
    pub strict: bool,
    pub allow_nonpositive: bool,
    pub backend: Backend,
}

fn identify_with<T: Scalar>(model: &ModelFile, args: &IdentifyArgs, name: &str) -> Result<IdentReport<T>, Outcome> {
    let mut r = model.resolve().map_err(semantic)?;
    if let Some(labels) = &args.thresholds {
        let y = model.dag.get(&r.spec.outcome).expect("resolved outcome");
        r.thresholds = labels
            .iter()
            .map(|l| {
                y.level_of(l)
                    .map(swid_core::Level)
                    .ok_or_else(|| semantic(format!("{l} is not a level of {}", r.spec.outcome)))
            })
            .collect::<Result<_, _>>()?;
    }
    let source = match (&model.scm, &model.dist) {
        (Some(scm), _) => Source::Scm(scm),
        (None, Some(d)) => Source::Dist(d),
        (None, None) => return Err(semantic("identify needs an `scm` or `dist` block")),
    };
    let opts = IdentOptions {
        scenario: r.scenario.clone().unwrap_or_else(|| name.to_string()),
        allow_nonpositive: args.allow_nonpositive || r.allow_nonpositive,
    };
    identify::<T>(&model.dag, source, &r.template, &r.spec, &r.thresholds, &opts).map_err(|e| match e {
        IdentError::Positivity(report) => Outcome {
            code: EXIT_POSITIVITY,
            stdout: pretty(&json!({"positivity": report.to_json()})),
            stderr: format!("positivity fails: {report}"),
        },
        other => semantic(other),
    })
}

/// g-formula, IPW and (for SCMs) the interventional oracle at each threshold.
pub fn cmd_identify(model: &ModelFile, args: &IdentifyArgs, name: &str) -> Outcome {
    let result = match args.backend {
        Backend::Rational => identify_with::<Prob>(model, args, name).map(|r| (r.to_json(), r.exchangeability_holds())),
        Backend::Decimal => identify_with::<Decimal>(model, args, name).map(|r| (r.to_json(), r.exchangeability_holds())),
    };
    match result {
        Ok((json, holds)) => Outcome {
            code: if args.strict && !holds { EXIT_EXCHANGEABILITY } else { EXIT_OK },
            stdout: pretty(&json),
            stderr: String::new(),
        },
        Err(o) => o,
    }
}

/// Draws `n` rows and compares the plug-in g-formula with the exact value.
/// Returns the dataset CSV separately from the outcome.
pub fn cmd_simulate(model: &ModelFile, n: usize, seed: u64) -> (Option<String>, Outcome) {
    let Some(scm) = &model.scm else {
        return (None, semantic("simulate needs an `scm` block"));
    };
    let r = match model.resolve() {
        Ok(r) => r,
        Err(e) => return (None, semantic(e)),
    };
    let data = sample(scm, n, seed);
    let csv = data.to_csv();
    let law = match factual_law(scm) {
        Ok(l) => l,
        Err(e) => return (Some(csv), semantic(e)),
    };
    let support = &model.dag.get(&r.spec.outcome).expect("resolved outcome").support;
    let mut rows = Vec::new();
    for &y in &r.thresholds {
        let plugin = match plugin_estimate(&data, &r.spec, y) {
            Ok(p) => p,
            Err(e) => return (Some(csv), Outcome::fail(EXIT_POSITIVITY, e.to_string())),
        };
        let exact = match g_formula(&law, &r.spec, y) {
            Ok(v) => Some(v),
            Err(IdentError::Positivity(_)) => None,
            Err(e) => return (Some(csv), semantic(e)),
        };
        let diff = exact.as_ref().map(|e| e.abs_diff(&plugin));
        rows.push(json!({
            "y": support[y.0 as usize],
            "plugin": plugin.render(),
            "plugin_f64": plugin.to_f64(),
            "exact": exact.map(|e| e.render()),
            "abs_diff_f64": diff.map(|d| d.to_f64()),
        }));
    }
    let out = json!({"n": n, "seed": seed, "regime": r.regime.to_string(), "thresholds": rows});
    (Some(csv), Outcome::ok(pretty(&out)))
}

pub fn cmd_presets() -> Outcome {
    let mut out = String::new();
    for name in SCENARIOS {
        let s = swid_core::preset(name).expect("bundled scenario");
        let latent = s.dag.nodes().iter().filter(|n| !n.observed).count();
        let steps: Vec<String> = s.template.steps().iter().map(|(v, st)| format!("{v}={}", match st {
            swid_core::Setting::Value { label, .. } => label.clone(),
            swid_core::Setting::Symbol(sym) => sym.clone(),
        })).collect();
        out.push_str(&format!(
            "{name}: {} nodes ({} latent), {} edges; regime {}; outcome {}\n",
            s.dag.len(),
            latent,
            s.dag.edge_count(),
            steps.join(", "),
            s.outcome
        ));
    }
    Outcome::ok(out)
}
