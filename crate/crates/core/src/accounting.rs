//! Per-client privacy spend. Protocol steps charge the accountant every time
//! they touch a client; exceeding the per-client limit is an error.

use crate::error::{Error, Result};
use crate::mechanisms::Epsilon;

#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyAccountant {
    limit: Epsilon,
    spent: Vec<f64>,
    queries: Vec<u32>,
}

impl PrivacyAccountant {
    pub fn new(clients: usize, limit: Epsilon) -> Self {
        Self {
            limit,
            spent: vec![0.0; clients],
            queries: vec![0; clients],
        }
    }

    /// Records one release of `cost` by `client`. Infinite costs are counted
    /// but never exceed an infinite limit.
    pub fn charge(&mut self, client: usize, cost: Epsilon) -> Result<()> {
        let spent = self.spent[client] + cost.value();
        self.queries[client] += 1;
        if !self.limit.is_infinite() && spent > self.limit.value() * (1.0 + 1e-12) {
            return Err(Error::BudgetExceeded {
                client,
                spent,
                limit: self.limit.value(),
            });
        }
        self.spent[client] = spent;
        Ok(())
    }

    pub fn spent(&self, client: usize) -> f64 {
        self.spent[client]
    }

    pub fn queries(&self, client: usize) -> u32 {
        self.queries[client]
    }

    pub fn limit(&self) -> Epsilon {
        self.limit
    }

    pub fn clients(&self) -> usize {
        self.spent.len()
    }

    pub fn max_queries(&self) -> u32 {
        self.queries.iter().copied().max().unwrap_or(0)
    }

    pub fn max_spent(&self) -> f64 {
        self.spent.iter().copied().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn over_budget_is_rejected() {
        let e = Epsilon::new(1.0).unwrap();
        let half = Epsilon::new(0.5).unwrap();
        let mut acc = PrivacyAccountant::new(2, e);
        acc.charge(0, half).unwrap();
        acc.charge(0, half).unwrap();
        assert!(acc.charge(0, half).is_err());
        assert_eq!(acc.queries(0), 3);
        assert_eq!(acc.spent(0), 1.0);
        assert_eq!(acc.queries(1), 0);
    }

    #[test]
    fn infinite_limit_never_trips() {
        let mut acc = PrivacyAccountant::new(1, Epsilon::INFINITE);
        for _ in 0..3 {
            acc.charge(0, Epsilon::INFINITE).unwrap();
        }
        assert_eq!(acc.max_queries(), 3);
    }
}
