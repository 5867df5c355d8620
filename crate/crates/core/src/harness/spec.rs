//! Policy and predictor spec strings.
//!
//! Policies: `lru | marker | belady | blind_oracle | lrb | fitf |
//! switch_det(a,b,bound) | switch_rand(a,b,beta)`, each optionally prefixed
//! with `guard:`. Sub-policies of the switches are specs themselves.
//!
//! Predictors: `none | lognormal[(sigma)] | flip[(p)] | fitf[(eps)] |
//! pleco[(alpha,offset)] | popu | inverted`, or `binary[(boundary)]:<inner>`
//! to threshold an NRT predictor into labels.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::guard::Guard;
use crate::policy::{
    Belady, BlindOracle, FitfFollower, Lru, LrbFollower, Marker, Policy, SwitchDeterministic,
    SwitchRandomized,
};
use crate::predict::{
    binary_from_nrt, default_boundary, flip_labels, inverted_nrt, noisy_fitf, pleco, popu,
    synthetic_nrt, PlecoParams, PredictionBundle,
};
use crate::trace::Trace;

#[derive(Clone, Debug, PartialEq)]
pub enum PolicySpec {
    Named(String),
    Guard(Box<PolicySpec>),
    SwitchDet(Box<PolicySpec>, Box<PolicySpec>, f64),
    SwitchRand(Box<PolicySpec>, Box<PolicySpec>, f64),
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Named(n) => f.write_str(n),
            PolicySpec::Guard(p) => write!(f, "guard:{p}"),
            PolicySpec::SwitchDet(a, b, x) => write!(f, "switch_det({a},{b},{x})"),
            PolicySpec::SwitchRand(a, b, x) => write!(f, "switch_rand({a},{b},{x})"),
        }
    }
}

/// Splits `s` at commas that are not nested in parentheses.
fn split_args(s: &str) -> Result<Vec<&str>> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::Config(format!("unbalanced `)` in `{s}`")))?
            }
            ',' if depth == 0 => {
                parts.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::Config(format!("unbalanced `(` in `{s}`")));
    }
    parts.push(s[start..].trim());
    Ok(parts)
}

/// `name(args)` or plain `name`.
fn call(s: &str) -> Result<(&str, Option<Vec<&str>>)> {
    let s = s.trim();
    match s.find('(') {
        None => Ok((s, None)),
        Some(open) => {
            let inner = s[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::Config(format!("expected `)` at the end of `{s}`")))?;
            Ok((s[..open].trim(), Some(split_args(inner)?)))
        }
    }
}

fn number(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Config(format!("{what}: `{s}` is not a number")))
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl PolicySpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("guard:") {
            return Ok(PolicySpec::Guard(Box::new(Self::parse(rest)?)));
        }
        let (name, args) = call(s)?;
        match (name, args) {
            ("switch_det" | "switch_rand", Some(args)) => {
                let [a, b, x] = args[..] else {
                    return Err(Error::Config(format!("`{name}` takes three arguments, got `{s}`")));
                };
                let (a, b) = (Box::new(Self::parse(a)?), Box::new(Self::parse(b)?));
                let x = number(x, name)?;
                Ok(if name == "switch_det" {
                    PolicySpec::SwitchDet(a, b, x)
                } else {
                    PolicySpec::SwitchRand(a, b, x)
                })
            }
            (_, None) if is_ident(name) => Ok(PolicySpec::Named(name.to_string())),
            _ => Err(Error::Config(format!("cannot parse policy `{s}`"))),
        }
    }
}

pub type PolicyFactory = Arc<dyn Fn(&Trace) -> Box<dyn Policy> + Send + Sync>;

/// Maps policy names to constructors. Extra entries can be registered,
/// which is how tests plug in deliberately broken policies.
#[derive(Clone)]
pub struct PolicyRegistry {
    factories: BTreeMap<String, PolicyFactory>,
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        let mut r = PolicyRegistry {
            factories: BTreeMap::new(),
        };
        r.register("lru", |_| Box::new(Lru::new()));
        r.register("marker", |_| Box::new(Marker::new()));
        r.register("belady", |t| Box::new(Belady::new(t)));
        r.register("blind_oracle", |_| Box::new(BlindOracle::new()));
        r.register("lrb", |_| Box::new(LrbFollower::new()));
        r.register("fitf", |_| Box::new(FitfFollower::new()));
        r
    }
}

impl PolicyRegistry {
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&Trace) -> Box<dyn Policy> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Arc::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    /// Checks that every name in the spec is registered.
    pub fn resolve(&self, spec: &PolicySpec) -> Result<()> {
        match spec {
            PolicySpec::Named(n) if self.factories.contains_key(n) => Ok(()),
            PolicySpec::Named(n) => Err(Error::Config(format!(
                "unknown policy `{n}` (known: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))),
            PolicySpec::Guard(p) => self.resolve(p),
            PolicySpec::SwitchDet(a, b, _) | PolicySpec::SwitchRand(a, b, _) => {
                self.resolve(a)?;
                self.resolve(b)
            }
        }
    }

    /// Builds a fresh policy for `trace`. Guards get per-request auditing
    /// when `audit` is set.
    pub fn build(&self, spec: &PolicySpec, trace: &Trace, audit: bool) -> Result<Box<dyn Policy>> {
        Ok(match spec {
            PolicySpec::Named(n) => {
                self.resolve(spec)?;
                (self.factories[n])(trace)
            }
            PolicySpec::Guard(p) => Box::new(Guard::new(self.build(p, trace, audit)?).with_audit(audit)),
            PolicySpec::SwitchDet(a, b, x) => Box::new(SwitchDeterministic::new(
                self.build(a, trace, audit)?,
                self.build(b, trace, audit)?,
                *x,
            )?),
            PolicySpec::SwitchRand(a, b, x) => Box::new(SwitchRandomized::new(
                self.build(a, trace, audit)?,
                self.build(b, trace, audit)?,
                *x,
            )?),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PredictorSpec {
    None,
    LogNormal(Option<f64>),
    Flip(Option<f64>),
    Fitf(Option<f64>),
    Pleco(PlecoParams),
    Popu,
    Inverted,
    Binary {
        boundary: Option<f64>,
        inner: Box<PredictorSpec>,
    },
}

impl PredictorSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("binary") {
            let (head, inner) = rest
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("`{s}`: expected binary:<nrt predictor>")))?;
            let boundary = match head.trim() {
                "" => None,
                h => {
                    let call_text = format!("b{h}");
                    let (_, args) = call(&call_text)?;
                    match args.as_deref() {
                        Some([b]) => Some(number(b, "binary boundary")?),
                        _ => return Err(Error::Config(format!("cannot parse `{s}`"))),
                    }
                }
            };
            let inner = Self::parse(inner)?;
            if !inner.yields_nrt() {
                return Err(Error::Config(format!("`{s}`: binary needs an NRT predictor inside")));
            }
            return Ok(PredictorSpec::Binary {
                boundary,
                inner: Box::new(inner),
            });
        }
        let (name, args) = call(s)?;
        let one = |what: &str| -> Result<Option<f64>> {
            match args.as_deref() {
                None => Ok(None),
                Some([x]) => Ok(Some(number(x, what)?)),
                Some(_) => Err(Error::Config(format!("`{name}` takes one argument"))),
            }
        };
        let spec = match name {
            "none" => PredictorSpec::None,
            "lognormal" => PredictorSpec::LogNormal(one("sigma")?),
            "flip" => PredictorSpec::Flip(one("p_flip")?),
            "fitf" => PredictorSpec::Fitf(one("epsilon")?),
            "pleco" => PredictorSpec::Pleco(match args.as_deref() {
                None => PlecoParams::default(),
                Some([a, o]) => PlecoParams {
                    alpha: number(a, "pleco alpha")?,
                    offset: number(o, "pleco offset")?,
                },
                Some(_) => return Err(Error::Config("`pleco` takes (alpha,offset)".into())),
            }),
            "popu" => PredictorSpec::Popu,
            "inverted" => PredictorSpec::Inverted,
            _ => return Err(Error::Config(format!("unknown predictor `{s}`"))),
        };
        if args.is_some() && matches!(spec, PredictorSpec::None | PredictorSpec::Popu | PredictorSpec::Inverted) {
            return Err(Error::Config(format!("`{name}` takes no arguments")));
        }
        Ok(spec)
    }

    fn yields_nrt(&self) -> bool {
        matches!(
            self,
            PredictorSpec::LogNormal(_) | PredictorSpec::Pleco(_) | PredictorSpec::Popu | PredictorSpec::Inverted
        )
    }

    /// Whether a sweep grid can supply this predictor's parameter.
    pub fn sweepable(&self) -> bool {
        match self {
            PredictorSpec::LogNormal(_) | PredictorSpec::Flip(_) | PredictorSpec::Fitf(_) => true,
            PredictorSpec::Binary { inner, .. } => inner.sweepable(),
            _ => false,
        }
    }

    /// Name without the sweepable parameter, used in result tables.
    pub fn label(&self) -> String {
        match self {
            PredictorSpec::None => "none".into(),
            PredictorSpec::LogNormal(_) => "lognormal".into(),
            PredictorSpec::Flip(_) => "flip".into(),
            PredictorSpec::Fitf(_) => "fitf".into(),
            PredictorSpec::Pleco(p) => format!("pleco({},{})", p.alpha, p.offset),
            PredictorSpec::Popu => "popu".into(),
            PredictorSpec::Inverted => "inverted".into(),
            PredictorSpec::Binary { boundary: None, inner } => format!("binary:{}", inner.label()),
            PredictorSpec::Binary { boundary: Some(b), inner } => format!("binary({b}):{}", inner.label()),
        }
    }

    /// The parameter fixed in the spec string itself, if any.
    pub fn fixed_param(&self) -> Option<f64> {
        match self {
            PredictorSpec::LogNormal(x) | PredictorSpec::Flip(x) | PredictorSpec::Fitf(x) => *x,
            PredictorSpec::Binary { inner, .. } => inner.fixed_param(),
            _ => None,
        }
    }

    /// Builds a bundle for `trace`. `param` overrides the spec's own
    /// parameter.
    pub fn build(&self, trace: &Trace, k: usize, param: Option<f64>, seed: u64) -> Result<PredictionBundle> {
        let need = |what: &str| {
            param.or(self.fixed_param()).ok_or_else(|| {
                Error::Config(format!("predictor `{}` needs {what}: write it in the spec or pass a sweep", self.label()))
            })
        };
        match self {
            PredictorSpec::None => Ok(PredictionBundle::None),
            PredictorSpec::LogNormal(_) => synthetic_nrt(trace, need("sigma")?, seed),
            PredictorSpec::Flip(_) => flip_labels(trace, k, need("p_flip")?, seed),
            PredictorSpec::Fitf(_) => noisy_fitf(trace, need("epsilon")?, seed),
            PredictorSpec::Pleco(p) => pleco(trace, *p),
            PredictorSpec::Popu => Ok(popu(trace)),
            PredictorSpec::Inverted => Ok(inverted_nrt(trace)),
            PredictorSpec::Binary { boundary, inner } => {
                let nrt = inner.build(trace, k, param, seed)?;
                let b = boundary.unwrap_or_else(|| default_boundary(trace, k));
                binary_from_nrt(&nrt, b)
            }
        }
    }
}

/// Parses a sweep grid such as `0,0.5,1,2,4`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let grid = s
        .split(',')
        .map(|x| number(x.trim(), "sweep grid"))
        .collect::<Result<Vec<_>>>()?;
    if grid.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    Ok(grid)
}
