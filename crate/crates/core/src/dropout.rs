//! Bernoulli masks and their application to activations.
//!
//! Two conventions are supported. `Inverted` (default) divides kept
//! activations by the retain probability at train time, so evaluation is the
//! identity whatever schedule drove training. `Classic` keeps activations
//! unscaled during training and multiplies them by the layer's floor
//! retain probability at evaluation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which retain probability a dropout layer follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetainGroup {
    Input,
    Conv,
    Fc,
    Hidden,
    None,
}

impl RetainGroup {
    /// The four groups that carry a retain probability, in CSV column order.
    pub const DROPPABLE: [RetainGroup; 4] = [
        RetainGroup::Input,
        RetainGroup::Conv,
        RetainGroup::Fc,
        RetainGroup::Hidden,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RetainGroup::Input => "input",
            RetainGroup::Conv => "conv",
            RetainGroup::Fc => "fc",
            RetainGroup::Hidden => "hidden",
            RetainGroup::None => "none",
        }
    }
}

impl fmt::Display for RetainGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RetainGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input" => Ok(RetainGroup::Input),
            "conv" => Ok(RetainGroup::Conv),
            "fc" => Ok(RetainGroup::Fc),
            "hidden" => Ok(RetainGroup::Hidden),
            "none" => Ok(RetainGroup::None),
            other => Err(Error::Input(format!("unknown retain group '{other}'"))),
        }
    }
}

/// One retain probability per droppable group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetainGroupConfig {
    pub input: f64,
    pub conv: f64,
    pub fc: f64,
    pub hidden: f64,
}

impl RetainGroupConfig {
    /// Values used for the convolutional networks: input 0.9, conv 0.75, fc 0.5.
    /// `hidden` follows the MLP value.
    pub const CNN: Self = Self {
        input: 0.9,
        conv: 0.75,
        fc: 0.5,
        hidden: 0.5,
    };

    /// Values used for the MLP: input 0.8, hidden 0.5.
    pub const MLP: Self = Self {
        input: 0.8,
        conv: 0.75,
        fc: 0.5,
        hidden: 0.5,
    };

    pub fn uniform(theta: f64) -> Self {
        Self {
            input: theta,
            conv: theta,
            fc: theta,
            hidden: theta,
        }
    }

    pub fn new(input: f64, conv: f64, fc: f64, hidden: f64) -> Result<Self> {
        let cfg = Self {
            input,
            conv,
            fc,
            hidden,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for group in RetainGroup::DROPPABLE {
            check_theta(self.get(group))
                .map_err(|_| Error::Input(format!("retain probability for {group} = {} outside (0, 1]", self.get(group))))?;
        }
        Ok(())
    }

    /// Retain probability of `group`; `RetainGroup::None` is always 1.
    pub fn get(&self, group: RetainGroup) -> f64 {
        match group {
            RetainGroup::Input => self.input,
            RetainGroup::Conv => self.conv,
            RetainGroup::Fc => self.fc,
            RetainGroup::Hidden => self.hidden,
            RetainGroup::None => 1.0,
        }
    }

    pub fn set(&mut self, group: RetainGroup, theta: f64) {
        match group {
            RetainGroup::Input => self.input = theta,
            RetainGroup::Conv => self.conv = theta,
            RetainGroup::Fc => self.fc = theta,
            RetainGroup::Hidden => self.hidden = theta,
            RetainGroup::None => {}
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutConvention {
    #[default]
    Inverted,
    Classic,
}

impl FromStr for DropoutConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverted" => Ok(Self::Inverted),
            "classic" => Ok(Self::Classic),
            other => Err(Error::Input(format!("unknown dropout convention '{other}'"))),
        }
    }
}

impl fmt::Display for DropoutConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Inverted => "inverted",
            Self::Classic => "classic",
        })
    }
}

/// A sampled binary mask. Entries are exactly 0.0 or 1.0.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    values: Tensor,
    theta_used: f64,
    /// Identifier assigned by the sampler's owner; lets a network check that
    /// backward consumed the masks drawn by the matching forward.
    pub serial: u64,
}

impl DropoutMask {
    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn theta_used(&self) -> f64 {
        self.theta_used
    }

    pub fn shape(&self) -> &[usize] {
        self.values.shape()
    }

    pub fn kept(&self) -> usize {
        self.values.data().iter().filter(|&&v| v == 1.0).count()
    }

    /// Builds a mask from explicit 0/1 entries.
    pub fn from_values(values: Tensor, theta_used: f64) -> Result<Self> {
        check_theta(theta_used)?;
        if values.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Input("mask entries must be 0 or 1".into()));
        }
        Ok(Self {
            values,
            theta_used,
            serial: 0,
        })
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self {
            values: Tensor::full(shape, 1.0),
            theta_used: 1.0,
            serial: 0,
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta <= 1.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("retain probability {theta} outside (0, 1]")))
    }
}

/// Draws i.i.d. Bernoulli(`theta`) entries in row-major order, consuming
/// exactly one `f64` draw per entry: an entry is kept when `u < theta`.
pub fn sample_mask<R: Rng + ?Sized>(shape: &[usize], theta: f64, rng: &mut R) -> Result<DropoutMask> {
    check_theta(theta)?;
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| if rng.random::<f64>() < theta { 1.0 } else { 0.0 })
        .collect();
    Ok(DropoutMask {
        values: Tensor::from_parts(shape.to_vec(), data),
        theta_used: theta,
        serial: 0,
    })
}

fn masked(x: &Tensor, m: &DropoutMask, scale: f64, what: &str) -> Result<Tensor> {
    if x.shape() != m.shape() {
        return Err(Error::Dimension(format!(
            "{what}: activation {:?} vs mask {:?}",
            x.shape(),
            m.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(m.values.data())
        .map(|(&v, &r)| if r == 1.0 { v * scale } else { 0.0 })
        .collect();
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}

/// `y = (x * m) / theta_used`.
pub fn apply_dropout_train(x: &Tensor, m: &DropoutMask) -> Result<Tensor> {
    masked(x, m, 1.0 / m.theta_used, "dropout")
}

/// Inverted-convention evaluation: the identity.
pub fn apply_dropout_eval(x: &Tensor) -> Tensor {
    x.clone()
}

/// `dx = (dy * m) / theta_used`, using the mask of the matching forward pass.
pub fn dropout_backward(dy: &Tensor, m: &DropoutMask) -> Result<Tensor> {
    masked(dy, m, 1.0 / m.theta_used, "dropout backward")
}

/// Train-time application under either convention.
pub fn apply_train(x: &Tensor, m: &DropoutMask, convention: DropoutConvention) -> Result<Tensor> {
    match convention {
        DropoutConvention::Inverted => apply_dropout_train(x, m),
        DropoutConvention::Classic => masked(x, m, 1.0, "dropout"),
    }
}

pub fn backward(dy: &Tensor, m: &DropoutMask, convention: DropoutConvention) -> Result<Tensor> {
    match convention {
        DropoutConvention::Inverted => dropout_backward(dy, m),
        DropoutConvention::Classic => masked(dy, m, 1.0, "dropout backward"),
    }
}

/// Evaluation-time application; `theta_bar` is the layer's floor retain
/// probability and only matters for the classic convention.
pub fn apply_eval(x: &Tensor, theta_bar: f64, convention: DropoutConvention) -> Tensor {
    match convention {
        DropoutConvention::Inverted => apply_dropout_eval(x),
        DropoutConvention::Classic => x.map(|v| v * theta_bar),
    }
}
