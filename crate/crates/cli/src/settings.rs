//! Parsing of textual option values and of scenario files.

use std::path::Path;

use serde::Deserialize;

use fel_core::simulation::{BandwidthSearch, SimConfig};
use fel_core::{Bandwidth, Error, FittedValues, IntervalMethod, Kernel, Result, SemiMetric};

fn bad(msg: String) -> Error {
    Error::InvalidConfig(msg)
}

/// `deriv:k` or `pca:q`.
pub fn parse_semimetric(s: &str) -> Result<SemiMetric> {
    let (kind, arg) = s
        .split_once(':')
        .ok_or_else(|| bad(format!("semimetric {s:?}: expected deriv:k or pca:q")))?;
    let n: usize = arg
        .parse()
        .map_err(|_| bad(format!("semimetric {s:?}: {arg:?} is not a nonnegative integer")))?;
    match kind {
        "deriv" => Ok(SemiMetric::deriv_l2(n)),
        "pca" if n >= 1 => Ok(SemiMetric::pca(n)),
        "pca" => Err(bad("pca needs at least one component".into())),
        _ => Err(bad(format!("unknown semimetric {kind:?}"))),
    }
}

pub fn parse_kernel(s: &str) -> Result<Kernel> {
    match s {
        "quadratic" => Ok(Kernel::Quadratic),
        "uniform" => Ok(Kernel::Uniform),
        _ => Err(bad(format!("unknown kernel {s:?}: expected quadratic or uniform"))),
    }
}

/// Number of quantile candidates behind plain `cv`.
pub const DEFAULT_QUANTILES: usize = 15;

/// `cv`, `cv:quantiles:N`, `cv:knn`, `fixed:h` or `knn:k`.
pub fn parse_bandwidth(s: &str) -> Result<Bandwidth> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |v: &str| -> Result<f64> {
        v.parse::<f64>()
            .ok()
            .filter(|h| h.is_finite() && *h > 0.0)
            .ok_or_else(|| bad(format!("bandwidth {s:?}: {v:?} is not a positive number")))
    };
    let count = |v: &str| -> Result<usize> {
        v.parse::<usize>()
            .ok()
            .filter(|&k| k >= 1)
            .ok_or_else(|| bad(format!("bandwidth {s:?}: {v:?} is not a positive integer")))
    };
    match parts.as_slice() {
        ["cv"] => Ok(Bandwidth::CrossValidatedQuantiles(DEFAULT_QUANTILES)),
        ["cv", "knn"] => Ok(Bandwidth::CrossValidatedNeighborsAuto),
        ["cv", "quantiles", n] => Ok(Bandwidth::CrossValidatedQuantiles(count(n)?)),
        ["fixed", h] => Ok(Bandwidth::Fixed(num(h)?)),
        ["knn", k] => Ok(Bandwidth::Neighbors(count(k)?)),
        _ => Err(bad(format!(
            "bandwidth {s:?}: expected cv, cv:knn, cv:quantiles:N, fixed:h or knn:k"
        ))),
    }
}

/// Bandwidth rules usable by the coverage study.
pub fn parse_search(s: &str) -> Result<BandwidthSearch> {
    match parse_bandwidth(s)? {
        Bandwidth::CrossValidatedNeighborsAuto => Ok(BandwidthSearch::Neighbors),
        Bandwidth::CrossValidatedQuantiles(n) => Ok(BandwidthSearch::Quantiles(n)),
        _ => Err(bad(format!(
            "coverage studies cross-validate; use cv, cv:knn or cv:quantiles:N, not {s:?}"
        ))),
    }
}

pub fn parse_methods(s: &str) -> Result<Vec<IntervalMethod>> {
    let methods = s
        .split(',')
        .map(|m| m.trim())
        .filter(|m| !m.is_empty())
        .map(|m| {
            m.parse::<IntervalMethod>()
                .map_err(|_| bad(format!("unknown method {m:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(bad("no methods given".into()));
    }
    Ok(methods)
}

pub fn parse_alpha(alpha: f64) -> Result<f64> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(bad(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("{v:?} is not a finite number")))
        })
        .collect()
}

pub fn fitted_values(loo: bool) -> FittedValues {
    if loo {
        FittedValues::LeaveOneOut
    } else {
        FittedValues::SelfInclusive
    }
}

/// A series file: numbers separated by commas, whitespace or newlines.
pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        for (col, tok) in line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .enumerate()
        {
            let v = tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: line_no + 1,
                    column: Some(col + 1),
                    message: format!("not a finite number: {tok:?}"),
                })?;
            out.push(v);
        }
    }
    Ok(out)
}

/// Fields shared by the defaults block and each scenario of a scenario
/// file; scenario values override defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFields {
    pub n: Option<usize>,
    pub sigma2: Option<f64>,
    pub reps: Option<usize>,
    pub test: Option<usize>,
    pub grid_points: Option<usize>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub methods: Option<Vec<String>>,
    pub bandwidth: Option<String>,
    pub loo_fits: Option<bool>,
}

impl ScenarioFields {
    fn or(&self, d: &ScenarioFields) -> ScenarioFields {
        ScenarioFields {
            n: self.n.or(d.n),
            sigma2: self.sigma2.or(d.sigma2),
            reps: self.reps.or(d.reps),
            test: self.test.or(d.test),
            grid_points: self.grid_points.or(d.grid_points),
            seed: self.seed.or(d.seed),
            alpha: self.alpha.or(d.alpha),
            methods: self.methods.clone().or_else(|| d.methods.clone()),
            bandwidth: self.bandwidth.clone().or_else(|| d.bandwidth.clone()),
            loo_fits: self.loo_fits.or(d.loo_fits),
        }
    }

    /// Fills unset fields from `base` and builds the study config.
    pub fn resolve(&self, base: &SimConfig) -> Result<SimConfig> {
        let methods = match &self.methods {
            Some(m) => parse_methods(&m.join(","))?,
            None => base.methods.clone(),
        };
        let bandwidth_search = match &self.bandwidth {
            Some(b) => parse_search(b)?,
            None => base.bandwidth_search,
        };
        let cfg = SimConfig {
            n: self.n.unwrap_or(base.n),
            sigma2: self.sigma2.unwrap_or(base.sigma2),
            n_reps: self.reps.unwrap_or(base.n_reps),
            n_test: self.test.unwrap_or(base.n_test),
            grid_points: self.grid_points.unwrap_or(base.grid_points),
            seed: self.seed.unwrap_or(base.seed),
            alpha: self.alpha.unwrap_or(base.alpha),
            methods,
            bandwidth_search,
            fitted_values: self.loo_fits.map_or(base.fitted_values, fitted_values),
            ..base.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub defaults: ScenarioFields,
    pub scenarios: Vec<ScenarioFields>,
}

pub fn load_scenarios(path: &Path, base: &SimConfig) -> Result<Vec<SimConfig>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let file: ScenarioFile = toml::from_str(&text).map_err(|e| bad(format!("{}: {}", path.display(), e.message())))?;
    if file.scenarios.is_empty() {
        return Err(bad(format!("{}: no scenarios", path.display())));
    }
    file.scenarios
        .iter()
        .map(|s| s.or(&file.defaults).resolve(base))
        .collect()
}
