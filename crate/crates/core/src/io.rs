//! File formats: model JSON, trajectory / posterior / density CSV, and
//! number formatting at 12 significant digits.
//!
//! States, symbols and time indices are 1-based in every file.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::inference::PosteriorTable;
use crate::model::{
    EmissionModel, GaussianComponent, GaussianSecondParam, HmmParams, ObservationSpace,
    Observations, Trajectory, Violation,
};
use crate::spectral::SpectralEstimate;

/// Rounds to 12 significant digits and prints the shortest representation.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let r = round12(x);
    if r != 0.0 && !(1e-5..1e16).contains(&r.abs()) {
        format!("{r:e}")
    } else {
        r.to_string()
    }
}

fn round12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// Applies [`round12`] to every number in a JSON value.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            serde_json::Number::from_f64(round12(n.as_f64().expect("f64")))
                .map(Value::Number)
                .unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with rounded numbers.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&round_json(serde_json::to_value(value)?))? + "\n")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: f64,
    /// Standard deviation or variance, per `gaussian_second_param`.
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EmissionSpec {
    Finite { pmf: Vec<f64> },
    GaussianMixture { components: Vec<ComponentSpec> },
    Histogram { lo: f64, hi: f64, heights: Vec<f64> },
}

/// On-disk model. With `transition` absent the labels are independent with
/// law `nu`; with `nu` absent the stationary law of `transition` is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian_second_param: Option<GaussianSecondParam>,
    pub emissions: Vec<EmissionSpec>,
}

impl ModelFile {
    /// `fallback` applies when the file does not set
    /// `gaussian_second_param`.
    pub fn to_params(&self, fallback: GaussianSecondParam) -> Result<HmmParams> {
        let second = self.gaussian_second_param.unwrap_or(fallback);
        let mut violations = Vec::new();
        let emissions: Vec<EmissionModel> = self
            .emissions
            .iter()
            .enumerate()
            .map(|(k, e)| match e {
                EmissionSpec::Finite { pmf } => EmissionModel::Finite { pmf: pmf.clone() },
                EmissionSpec::Histogram { lo, hi, heights } => EmissionModel::Histogram {
                    lo: *lo,
                    hi: *hi,
                    heights: heights.clone(),
                },
                EmissionSpec::GaussianMixture { components } => EmissionModel::GaussianMixture {
                    components: components
                        .iter()
                        .enumerate()
                        .map(|(c, s)| {
                            if !(s.scale > 0.0) {
                                violations.push(Violation {
                                    location: format!("emission {} component {}", k + 1, c + 1),
                                    message: format!("scale must be > 0, got {}", s.scale),
                                });
                            }
                            GaussianComponent::new(s.weight, s.mean, second.to_stddev(s.scale))
                        })
                        .collect(),
                },
            })
            .collect();
        if !violations.is_empty() {
            return Err(Error::InvalidParams(violations));
        }
        match (&self.nu, &self.transition) {
            (Some(nu), Some(q)) => HmmParams::new(nu.clone(), q.clone(), emissions),
            (Some(nu), None) => HmmParams::iid(nu.clone(), emissions),
            (None, Some(q)) => HmmParams::stationary(q.clone(), emissions),
            (None, None) => Err(Error::InvalidArgument(
                "model needs nu, transition or both".into(),
            )),
        }
    }

    pub fn from_params(params: &HmmParams, second: GaussianSecondParam) -> Self {
        let emissions = params
            .emissions
            .iter()
            .map(|e| match e {
                EmissionModel::Finite { pmf } => EmissionSpec::Finite { pmf: pmf.clone() },
                EmissionModel::Histogram { lo, hi, heights } => EmissionSpec::Histogram {
                    lo: *lo,
                    hi: *hi,
                    heights: heights.clone(),
                },
                EmissionModel::GaussianMixture { components } => EmissionSpec::GaussianMixture {
                    components: components
                        .iter()
                        .map(|c| ComponentSpec {
                            weight: c.weight,
                            mean: c.mean,
                            scale: second.from_stddev(c.stddev),
                        })
                        .collect(),
                },
            })
            .collect();
        Self {
            nu: Some(params.nu.clone()),
            transition: Some(params.transition.clone()),
            gaussian_second_param: Some(second),
            emissions,
        }
    }
}

pub fn parse_model(text: &str, fallback: GaussianSecondParam) -> Result<HmmParams> {
    serde_json::from_str::<ModelFile>(text)?.to_params(fallback)
}

/// `i,x,y` with 1-based `i`, states and symbols.
pub fn trajectory_csv(t: &Trajectory) -> String {
    let mut out = String::from("i,x,y\n");
    for i in 0..t.len() {
        let y = match &t.y {
            Observations::Symbols(s) => (s[i] + 1).to_string(),
            Observations::Reals(v) => fmt_num(v[i]),
        };
        out.push_str(&format!("{},{},{}\n", i + 1, t.x[i] + 1, y));
    }
    out
}

/// Observations and, when the `x` column is filled, hidden states.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationFile {
    pub y: Observations,
    pub x: Option<Vec<usize>>,
}

/// Reads `i,x,y` (or `i,y`) CSV. `space` decides whether `y` holds 1-based
/// symbols or reals.
pub fn parse_trajectory_csv(text: &str, space: ObservationSpace) -> Result<ObservationFile> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty trajectory file".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let yc =
        col("y").ok_or_else(|| Error::InvalidArgument("trajectory CSV needs a y column".into()))?;
    let xc = col("x");
    let mut xs = Vec::new();
    let mut reals = Vec::new();
    let mut symbols = Vec::new();
    let mut have_x = xc.is_some();
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |what: &str| Error::InvalidArgument(format!("line {}: bad {what}", row + 2));
        let y = fields.get(yc).ok_or_else(|| bad("y"))?;
        match space {
            ObservationSpace::Real => reals.push(y.parse::<f64>().map_err(|_| bad("y"))?),
            ObservationSpace::Finite { size } => {
                let s: usize = y.parse().map_err(|_| bad("y"))?;
                if s == 0 || s > size {
                    return Err(bad("symbol"));
                }
                symbols.push(s - 1);
            }
        }
        if let Some(c) = xc {
            match fields.get(c).filter(|f| !f.is_empty()) {
                Some(f) => {
                    let x: usize = f.parse().map_err(|_| bad("x"))?;
                    if x == 0 {
                        return Err(bad("x"));
                    }
                    xs.push(x - 1);
                }
                None => have_x = false,
            }
        }
    }
    let y = match space {
        ObservationSpace::Real => Observations::Reals(reals),
        ObservationSpace::Finite { .. } => Observations::Symbols(symbols),
    };
    if y.is_empty() {
        return Err(Error::InvalidArgument("trajectory file has no rows".into()));
    }
    Ok(ObservationFile {
        y,
        x: have_x.then_some(xs),
    })
}

/// `i,p1..pJ`.
pub fn posterior_csv(t: &PosteriorTable) -> String {
    let mut out = String::from("i");
    for k in 1..=t.j {
        out.push_str(&format!(",p{k}"));
    }
    out.push('\n');
    for (i, row) in t.rows().enumerate() {
        out.push_str(&(i + 1).to_string());
        for p in row {
            out.push(',');
            out.push_str(&fmt_num(*p));
        }
        out.push('\n');
    }
    out
}

/// `x,f1..fJ` over the estimate's grid (1-based symbols for a finite
/// alphabet).
pub fn density_csv(e: &SpectralEstimate) -> String {
    let j = e.f_hat.len();
    let mut out = String::from("x");
    for k in 1..=j {
        out.push_str(&format!(",f{k}"));
    }
    out.push('\n');
    let symbolic = matches!(e.basis, crate::spectral::Basis::Symbols { .. });
    for (g, &x) in e.grid.iter().enumerate() {
        out.push_str(&if symbolic {
            (x as usize + 1).to_string()
        } else {
            fmt_num(x)
        });
        for f in &e.f_hat {
            out.push(',');
            out.push_str(&fmt_num(f[g]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_trajectory;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(123456789.123456789), "123456789.123");
        assert_eq!(fmt_num(1.5611903645212e-12), "1.56119036452e-12");
    }

    #[test]
    fn model_round_trip() {
        let text = r#"{
            "transition": [[0.8, 0.2], [0.3, 0.7]],
            "gaussian_second_param": "variance",
            "emissions": [
                {"type": "gaussian_mixture", "components": [{"weight": 1.0, "mean": 0.0, "scale": 4.0}]},
                {"type": "gaussian_mixture", "components": [{"weight": 1.0, "mean": 1.0, "scale": 1.0}]}
            ]
        }"#;
        let p = parse_model(text, GaussianSecondParam::Stddev).unwrap();
        assert!((p.nu[0] - 0.6).abs() < 1e-12);
        match &p.emissions[0] {
            EmissionModel::GaussianMixture { components } => assert_eq!(components[0].stddev, 2.0),
            _ => unreachable!(),
        }
        let back = ModelFile::from_params(&p, GaussianSecondParam::Variance);
        assert_eq!(back.to_params(GaussianSecondParam::Stddev).unwrap(), p);
    }

    #[test]
    fn invalid_models_list_every_violation() {
        let text = r#"{"nu": [0.5, 0.6], "transition": [[0.9, 0.2], [0.5, 0.5]],
            "emissions": [{"type": "finite", "pmf": [1.0]}, {"type": "finite", "pmf": [1.0]}]}"#;
        match parse_model(text, GaussianSecondParam::Stddev) {
            Err(Error::InvalidParams(v)) => assert!(v.len() >= 2, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let p = HmmParams::iid(
            vec![0.5, 0.5],
            vec![
                EmissionModel::Finite {
                    pmf: vec![0.7, 0.3],
                },
                EmissionModel::Finite {
                    pmf: vec![0.1, 0.9],
                },
            ],
        )
        .unwrap();
        let t = sample_trajectory(&p, 30, 2).unwrap();
        let csv = trajectory_csv(&t);
        assert!(csv.starts_with("i,x,y\n1,"));
        let back = parse_trajectory_csv(&csv, p.space()).unwrap();
        assert_eq!(back.y, t.y);
        assert_eq!(back.x.unwrap(), t.x);
        let obs_only = parse_trajectory_csv("i,y\n1,2\n2,1\n", p.space()).unwrap();
        assert_eq!(obs_only.y, Observations::Symbols(vec![1, 0]));
        assert!(obs_only.x.is_none());
        assert!(parse_trajectory_csv("i,y\n1,3\n", p.space()).is_err());
    }
}
