//! Leaf distributions with all parameters resolved to concrete values.
//!
//! Every distribution supports log-density evaluation and sampling; the
//! finitely supported ones also enumerate their domain, which is what the
//! full-conditional sampler and the enumeration oracle consume. The three
//! views are kept mutually consistent (enumerated masses sum to one and
//! match `log_density`), and a test below checks that.

use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use statrs::function::gamma::ln_gamma;

use crate::value::{ObjectId, Value};

pub const NEG_INF: f64 = f64::NEG_INFINITY;

/// Natural log of `k!`.
pub fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// Log pmf of a Poisson with the given rate.
pub fn poisson_ln_pmf(rate: f64, k: u64) -> f64 {
    if rate <= 0.0 {
        return if k == 0 { 0.0 } else { NEG_INF };
    }
    k as f64 * rate.ln() - rate - ln_factorial(k)
}

/// Upper bound on the Poisson tail mass `P(X > k)`.
pub fn poisson_tail_mass(rate: f64, k: u64) -> f64 {
    let mut cdf = 0.0;
    for i in 0..=k {
        cdf += poisson_ln_pmf(rate, i).exp();
    }
    (1.0 - cdf).max(0.0)
}

/// A leaf distribution with resolved parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    /// Explicit finite support. Used for categorical leaves and for tabular
    /// rows once the row has been selected.
    Categorical(Vec<(Value, f64)>),
    /// Bernoulli over `{false, true}` or `{0, 1}` depending on the declared
    /// return type.
    Bernoulli { p: f64, int_valued: bool },
    Poisson { rate: f64 },
    /// Uniform choice over the currently alive objects of a type. The world
    /// collapses the interchangeable unreferenced objects of each binding
    /// group into one `fresh` representative carrying the spare count;
    /// `n_alive` is the true population size.
    UniformChoice {
        n_alive: u64,
        referenced: Vec<ObjectId>,
        fresh: Vec<(ObjectId, u64)>,
    },
    UniformReal { lo: f64, hi: f64 },
    Gaussian { mean: f64, variance: f64 },
    /// Deterministic value; produced by a missing else branch (null with
    /// probability one).
    PointMass(Value),
}

impl Distribution {
    /// Log density (or log mass) of `v`.
    pub fn log_density(&self, v: &Value) -> f64 {
        match self {
            Distribution::Categorical(items) => items
                .iter()
                .find(|(val, _)| val == v)
                .map(|(_, p)| if *p > 0.0 { p.ln() } else { NEG_INF })
                .unwrap_or(NEG_INF),
            Distribution::Bernoulli { p, int_valued } => {
                let hit = match (v, int_valued) {
                    (Value::Bool(b), false) => Some(*b),
                    (Value::Int(i), true) if *i == 0 || *i == 1 => Some(*i == 1),
                    _ => None,
                };
                match hit {
                    Some(true) if *p > 0.0 => p.ln(),
                    Some(false) if *p < 1.0 => (1.0 - p).ln(),
                    _ => NEG_INF,
                }
            }
            Distribution::Poisson { rate } => match v {
                Value::Int(k) if *k >= 0 => poisson_ln_pmf(*rate, *k as u64),
                _ => NEG_INF,
            },
            Distribution::UniformChoice { n_alive, .. } => match v {
                Value::Null => {
                    if *n_alive == 0 {
                        0.0
                    } else {
                        NEG_INF
                    }
                }
                Value::Obj(_) if *n_alive > 0 => -(*n_alive as f64).ln(),
                _ => NEG_INF,
            },
            Distribution::UniformReal { lo, hi } => match v {
                Value::Real(x) if *x >= *lo && *x < *hi => -(hi - lo).ln(),
                _ => NEG_INF,
            },
            Distribution::Gaussian { mean, variance } => match v.as_real() {
                Some(x) => {
                    let d = x - mean;
                    -0.5 * (d * d / variance)
                        - 0.5 * (2.0 * std::f64::consts::PI * variance).ln()
                }
                None => NEG_INF,
            },
            Distribution::PointMass(w) => {
                if v == w {
                    0.0
                } else {
                    NEG_INF
                }
            }
        }
    }

    /// Draw a value. For `UniformChoice` the draw is canonical: referenced
    /// objects are drawn with probability `1/n` each and all unreferenced
    /// ones collapse onto the single fresh representative.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Value {
        match self {
            Distribution::Categorical(items) => {
                let total: f64 = items.iter().map(|(_, p)| p).sum();
                let mut u = rng.random::<f64>() * total;
                for (v, p) in items {
                    u -= p;
                    if u <= 0.0 {
                        return v.clone();
                    }
                }
                items.last().expect("empty categorical").0.clone()
            }
            Distribution::Bernoulli { p, int_valued } => {
                let b = rng.random::<f64>() < *p;
                if *int_valued {
                    Value::Int(b as i64)
                } else {
                    Value::Bool(b)
                }
            }
            Distribution::Poisson { rate } => {
                let u = rng.random::<f64>();
                let mut k = 0u64;
                let mut cum = poisson_ln_pmf(*rate, 0).exp();
                while cum < u && k < 1_000_000 {
                    k += 1;
                    cum += poisson_ln_pmf(*rate, k).exp();
                }
                Value::Int(k as i64)
            }
            Distribution::UniformChoice {
                n_alive,
                referenced,
                fresh,
            } => {
                if *n_alive == 0 {
                    return Value::Null;
                }
                let u = rng.random::<f64>() * *n_alive as f64;
                let mut acc = referenced.len() as f64;
                if u < acc {
                    return Value::Obj(referenced[u.floor() as usize].clone());
                }
                for (obj, spares) in fresh {
                    acc += *spares as f64;
                    if u < acc {
                        return Value::Obj(obj.clone());
                    }
                }
                Value::Obj(
                    fresh
                        .last()
                        .expect("spare objects exist but no fresh representative")
                        .0
                        .clone(),
                )
            }
            Distribution::UniformReal { lo, hi } => {
                Value::Real(lo + rng.random::<f64>() * (hi - lo))
            }
            Distribution::Gaussian { mean, variance } => {
                let n = Normal::new(*mean, variance.sqrt()).expect("valid gaussian");
                Value::Real(n.sample(rng))
            }
            Distribution::PointMass(v) => v.clone(),
        }
    }

    /// Log probability that [`Distribution::sample`] returns `v`.
    ///
    /// Differs from [`Distribution::log_density`] only for the fresh
    /// representative of a `UniformChoice`, which stands for all `n - k`
    /// spare objects at once.
    pub fn sample_log_prob(&self, v: &Value) -> f64 {
        match self {
            Distribution::UniformChoice { n_alive, fresh, .. } => {
                if let Value::Obj(o) = v {
                    for (obj, spares) in fresh {
                        if o == obj {
                            return (*spares as f64 / *n_alive as f64).ln();
                        }
                    }
                }
                self.log_density(v)
            }
            _ => self.log_density(v),
        }
    }

    /// The finite support, if there is one. Continuous and countably
    /// infinite distributions return `None`.
    pub fn finite_support(&self) -> Option<Vec<Value>> {
        match self {
            Distribution::Categorical(items) => {
                Some(items.iter().map(|(v, _)| v.clone()).collect())
            }
            Distribution::Bernoulli { int_valued, .. } => Some(if *int_valued {
                vec![Value::Int(0), Value::Int(1)]
            } else {
                vec![Value::Bool(false), Value::Bool(true)]
            }),
            Distribution::UniformChoice {
                n_alive,
                referenced,
                fresh,
            } => {
                if *n_alive == 0 {
                    return Some(vec![Value::Null]);
                }
                let mut out: Vec<Value> =
                    referenced.iter().cloned().map(Value::Obj).collect();
                out.extend(fresh.iter().map(|(o, _)| Value::Obj(o.clone())));
                Some(out)
            }
            Distribution::PointMass(v) => Some(vec![v.clone()]),
            Distribution::Poisson { .. }
            | Distribution::UniformReal { .. }
            | Distribution::Gaussian { .. } => None,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(
            self,
            Distribution::UniformReal { .. } | Distribution::Gaussian { .. }
        )
    }
}
