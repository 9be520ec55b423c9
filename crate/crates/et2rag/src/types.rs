//! Domain types shared across the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A task query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let query = Query {
            id: id.into(),
            text: text.into(),
        };
        if query.text.trim().is_empty() {
            return Err(Error::InvalidQuery {
                id: query.id,
                reason: "text is empty after trimming".into(),
            });
        }
        Ok(query)
    }
}

/// One retrieved knowledge unit with its relevance score and 1-based rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub score: f64,
    pub rank: usize,
}

/// Per-candidate token budget L and vote size V.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetParams {
    pub response_length: usize,
    pub vote_size: usize,
}

impl BudgetParams {
    pub fn validate(&self) -> Result<()> {
        if self.response_length < 1 {
            return Err(Error::Config("budget.response_length must be >= 1".into()));
        }
        if self.vote_size < 1 {
            return Err(Error::Config("budget.vote_size must be >= 1".into()));
        }
        Ok(())
    }
}
