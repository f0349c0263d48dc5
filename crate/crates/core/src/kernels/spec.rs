//! Declarative kernel description and its `key=value` text form.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `exp(-gamma * ||x - y||^a)`.
    ExponentialType,
    /// Matérn with smoothness `nu` and length scale `l`.
    Matern,
    /// Infinite-width NNGP of the step activation on the sphere.
    ZonalNngpStep,
    /// Infinite-width NNGP of ReLU on the sphere (arc-cosine, order 1).
    ZonalNngpRelu,
    /// Infinite-width ReLU NTK on the sphere.
    ZonalNtkRelu,
    /// One-hidden-layer NNGP with `width_n1` seeded Gaussian features.
    RandomNngp1,
    /// One-hidden-layer NTK with `width_n1` seeded Gaussian features.
    RandomNtk1,
}

impl Family {
    pub fn is_zonal(self) -> bool {
        matches!(
            self,
            Family::ZonalNngpStep | Family::ZonalNngpRelu | Family::ZonalNtkRelu
        )
    }

    pub fn is_random(self) -> bool {
        matches!(self, Family::RandomNngp1 | Family::RandomNtk1)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::ExponentialType => "exp",
            Family::Matern => "matern",
            Family::ZonalNngpStep => "nngp-step",
            Family::ZonalNngpRelu => "nngp-relu",
            Family::ZonalNtkRelu => "ntk-relu",
            Family::RandomNngp1 => "nngp1",
            Family::RandomNtk1 => "ntk1",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "exp" | "exponential" | "laplace" | "gaussian" => Family::ExponentialType,
            "matern" => Family::Matern,
            "nngp-step" => Family::ZonalNngpStep,
            "nngp-relu" => Family::ZonalNngpRelu,
            "ntk-relu" | "ntk" => Family::ZonalNtkRelu,
            "nngp1" => Family::RandomNngp1,
            "ntk1" => Family::RandomNtk1,
            other => return Err(Error::KernelSpecParse(format!("unknown family `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Erf,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Erf => "erf",
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Erf => libm::erf(z),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Activation::Erf => std::f64::consts::FRAC_2_SQRT_PI * (-z * z).exp(),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "erf" => Activation::Erf,
            other => {
                return Err(Error::KernelSpecParse(format!(
                    "unknown activation `{other}`"
                )))
            }
        })
    }
}

/// A positive-semidefinite kernel: family plus parameters.
///
/// Only the fields relevant to `family` are read; the others keep their
/// defaults and are omitted from the text form.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub family: Family,
    pub gamma: f64,
    pub exponent_a: f64,
    pub nu: f64,
    pub length_l: f64,
    pub width_n1: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl KernelSpec {
    fn base(family: Family) -> Self {
        Self {
            family,
            gamma: 1.0,
            exponent_a: 1.0,
            nu: 0.5,
            length_l: 1.0,
            width_n1: 1000,
            activation: Activation::Relu,
            seed: 0,
        }
    }

    pub fn exponential(gamma: f64, exponent_a: f64) -> Self {
        Self {
            gamma,
            exponent_a,
            ..Self::base(Family::ExponentialType)
        }
    }

    /// `exp(-gamma ||x - y||)`.
    pub fn laplace(gamma: f64) -> Self {
        Self::exponential(gamma, 1.0)
    }

    /// `exp(-gamma ||x - y||^2)`.
    pub fn gaussian(gamma: f64) -> Self {
        Self::exponential(gamma, 2.0)
    }

    pub fn matern(nu: f64, length_l: f64) -> Self {
        Self {
            nu,
            length_l,
            ..Self::base(Family::Matern)
        }
    }

    pub fn zonal(family: Family) -> Self {
        assert!(family.is_zonal(), "{family:?} is not a zonal family");
        Self::base(family)
    }

    pub fn ntk_relu() -> Self {
        Self::zonal(Family::ZonalNtkRelu)
    }

    pub fn random_nngp(activation: Activation, width_n1: usize, seed: u64) -> Self {
        Self {
            activation,
            width_n1,
            seed,
            ..Self::base(Family::RandomNngp1)
        }
    }

    pub fn random_ntk(activation: Activation, width_n1: usize, seed: u64) -> Self {
        Self {
            activation,
            width_n1,
            seed,
            ..Self::base(Family::RandomNtk1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            Family::ExponentialType => {
                if !(self.gamma > 0.0 && self.gamma.is_finite()) {
                    return Err(invalid("gamma", format!("must be positive, got {}", self.gamma)));
                }
                if !(self.exponent_a > 0.0 && self.exponent_a <= 2.0) {
                    return Err(invalid(
                        "a",
                        format!("must lie in (0, 2], got {}", self.exponent_a),
                    ));
                }
            }
            Family::Matern => {
                if !(self.nu > 0.0 && self.nu < 1.0) {
                    return Err(invalid("nu", format!("must lie in (0, 1), got {}", self.nu)));
                }
                if !(self.length_l > 0.0 && self.length_l.is_finite()) {
                    return Err(invalid(
                        "l",
                        format!("must be positive, got {}", self.length_l),
                    ));
                }
            }
            Family::RandomNngp1 | Family::RandomNtk1 => {
                if self.width_n1 == 0 {
                    return Err(invalid("width", "must be positive"));
                }
            }
            Family::ZonalNngpStep | Family::ZonalNngpRelu | Family::ZonalNtkRelu => {}
        }
        Ok(())
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "family={}", self.family.name())?;
        match self.family {
            Family::ExponentialType => write!(f, " gamma={:?} a={:?}", self.gamma, self.exponent_a),
            Family::Matern => write!(f, " nu={:?} l={:?}", self.nu, self.length_l),
            Family::RandomNngp1 | Family::RandomNtk1 => write!(
                f,
                " activation={} width={} seed={}",
                self.activation.name(),
                self.width_n1,
                self.seed
            ),
            _ => Ok(()),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Parses `family=exp gamma=1.0 a=1.0` style text; pairs may also be
    /// separated by commas. `family=laplace` and `family=gaussian` are
    /// shorthands fixing `a`.
    fn from_str(s: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for token in s.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::KernelSpecParse(format!("expected key=value, got `{token}`")))?;
            pairs.push((key, value));
        }
        let family_text = pairs
            .iter()
            .find(|(k, _)| *k == "family")
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::KernelSpecParse("missing `family`".into()))?;
        let mut spec = Self::base(family_text.parse()?);
        match family_text {
            "laplace" => spec.exponent_a = 1.0,
            "gaussian" => spec.exponent_a = 2.0,
            _ => {}
        }
        let num = |key: &str, v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::KernelSpecParse(format!("bad value for `{key}`: `{v}`")))
        };
        let int = |key: &str, v: &str| -> Result<u64> {
            v.parse()
                .map_err(|_| Error::KernelSpecParse(format!("bad value for `{key}`: `{v}`")))
        };
        for (key, value) in pairs {
            match key {
                "family" => {}
                "gamma" => spec.gamma = num(key, value)?,
                "a" => spec.exponent_a = num(key, value)?,
                "nu" => spec.nu = num(key, value)?,
                "l" => spec.length_l = num(key, value)?,
                "width" => spec.width_n1 = int(key, value)? as usize,
                "seed" => spec.seed = int(key, value)?,
                "activation" => spec.activation = value.parse()?,
                other => return Err(Error::KernelSpecParse(format!("unknown key `{other}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}
