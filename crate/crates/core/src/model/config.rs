use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result, TradeError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum DataKind {
    Continuous,
    /// Categorical features; `categories[i]` is the number of codes of feature `i`.
    Discrete { categories: Vec<usize> },
}

impl DataKind {
    pub fn is_discrete(&self) -> bool {
        matches!(self, DataKind::Discrete { .. })
    }

    /// Widest categorical support (1 for continuous data).
    pub fn max_categories(&self) -> usize {
        match self {
            DataKind::Continuous => 1,
            DataKind::Discrete { categories } => categories.iter().copied().max().unwrap_or(0),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionMode {
    /// Recurrent embedding in front of the attention stack.
    #[default]
    Gru,
    /// Sinusoidal position features added to the embeddings.
    Fourier,
    /// No positional information beyond the causal mask.
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    #[default]
    Transformer,
    /// Stacked GRUs without attention.
    Rnn,
}

impl FromStr for PositionMode {
    type Err = TradeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(PositionMode::Gru),
            "fourier" => Ok(PositionMode::Fourier),
            "none" => Ok(PositionMode::None),
            _ => Err(config_err(format!("unknown position mode `{s}` (expected gru, fourier or none)"))),
        }
    }
}

impl fmt::Display for PositionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PositionMode::Gru => "gru",
            PositionMode::Fourier => "fourier",
            PositionMode::None => "none",
        })
    }
}

impl FromStr for Backbone {
    type Err = TradeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transformer" => Ok(Backbone::Transformer),
            "rnn" => Ok(Backbone::Rnn),
            _ => Err(config_err(format!("unknown backbone `{s}` (expected transformer or rnn)"))),
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::Transformer => "transformer",
            Backbone::Rnn => "rnn",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of features.
    pub d: usize,
    pub kind: DataKind,
    /// Mixture components per conditional (continuous data).
    pub m: usize,
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    /// Width of the position-wise feed-forward layer.
    pub ffn_hidden: usize,
    pub dropout: f64,
    pub gru_per_layer: bool,
    pub position_mode: PositionMode,
    pub backbone: Backbone,
}

impl ModelConfig {
    /// Small continuous model, suitable for toy problems.
    pub fn continuous(d: usize) -> Self {
        ModelConfig {
            d,
            kind: DataKind::Continuous,
            m: 10,
            layers: 1,
            heads: 2,
            hidden: 32,
            ffn_hidden: 64,
            dropout: 0.0,
            gru_per_layer: false,
            position_mode: PositionMode::Gru,
            backbone: Backbone::Transformer,
        }
    }

    pub fn discrete(categories: Vec<usize>) -> Self {
        ModelConfig {
            d: categories.len(),
            kind: DataKind::Discrete { categories },
            m: 1,
            ..ModelConfig::continuous(0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(config_err("model needs at least one feature"));
        }
        match &self.kind {
            DataKind::Continuous if self.m == 0 => return Err(config_err("mixture needs m >= 1 components")),
            DataKind::Discrete { categories } => {
                if categories.len() != self.d {
                    return Err(config_err(format!(
                        "{} category counts for {} features",
                        categories.len(),
                        self.d
                    )));
                }
                if let Some(i) = categories.iter().position(|&k| k < 2) {
                    return Err(config_err(format!("feature {i} has fewer than 2 categories")));
                }
            }
            DataKind::Continuous => {}
        }
        if self.heads == 0 || self.hidden == 0 || self.hidden % self.heads != 0 {
            return Err(config_err(format!(
                "hidden width {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if self.ffn_hidden == 0 {
            return Err(config_err("feed-forward width must be positive"));
        }
        if self.layers == 0 {
            return Err(config_err("model needs at least one layer"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(config_err(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Width of the per-position head output.
    pub fn head_width(&self) -> usize {
        match &self.kind {
            DataKind::Continuous => 3 * self.m,
            DataKind::Discrete { .. } => self.kind.max_categories(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ModelConfig::continuous(2).validate().is_ok());
        let mut c = ModelConfig::continuous(2);
        c.heads = 3;
        assert!(c.validate().is_err());
        c = ModelConfig::continuous(2);
        c.m = 0;
        assert!(c.validate().is_err());
        assert!(ModelConfig::discrete(vec![2, 1]).validate().is_err());
        assert!(ModelConfig::discrete(vec![2, 3]).validate().is_ok());
    }

    #[test]
    fn modes_parse_and_print() {
        for s in ["gru", "fourier", "none"] {
            assert_eq!(s.parse::<PositionMode>().unwrap().to_string(), s);
        }
        assert!("sinusoid".parse::<PositionMode>().is_err());
        assert_eq!("rnn".parse::<Backbone>().unwrap(), Backbone::Rnn);
    }

    #[test]
    fn config_round_trips_as_json() {
        let c = ModelConfig::discrete(vec![2, 2, 4]);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
    }
}
