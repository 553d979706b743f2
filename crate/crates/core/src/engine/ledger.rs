use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// How a decoded proposal is routed by the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Admission {
    /// Seen before; `first` is the slot reserved for the original.
    Duplicate {
        first: u64,
    },
    /// Charged one oracle call; the value is the reservation slot.
    Charged {
        slot: u64,
    },
    Exhausted,
}

/// Oracle-call accounting with a canonical-key cache.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    budget: u64,
    consumed: u64,
    cache: HashMap<String, u64>,
}

impl BudgetLedger {
    pub fn new(budget: u64) -> Self {
        Self {
            budget,
            consumed: 0,
            cache: HashMap::new(),
        }
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.consumed
    }

    pub fn is_exhausted(&self) -> bool {
        self.consumed >= self.budget
    }

    pub fn contains(&self, key: &str) -> bool {
        self.cache.contains_key(key)
    }

    /// Route one proposal. A charge reserves the key immediately, so a later
    /// proposal with the same key in the same batch is a duplicate.
    pub fn admit(&mut self, key: &str) -> Admission {
        if let Some(&first) = self.cache.get(key) {
            return Admission::Duplicate { first };
        }
        if self.is_exhausted() {
            return Admission::Exhausted;
        }
        let slot = self.consumed;
        self.consumed += 1;
        self.cache.insert(key.to_string(), slot);
        Admission::Charged { slot }
    }
}
