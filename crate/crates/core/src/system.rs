//! Everything computed from one weight at one point `t`: the orthogonal
//! polynomial table and the auxiliaries, with accessors for the scalar fields
//! that the differential identities are stated in.

use rug::Float;

use crate::error::{Error, Result};
use crate::ladder::{compute_aux_on, AuxTable};
use crate::num;
use crate::orthopoly::{build_op_table_on, Measure, OPTable};
use crate::quadrature::{rule_for, QuadratureRule, QuadratureSettings};
use crate::recurrences::sigma_offset;
use crate::weights::WeightParams;

#[derive(Clone, Debug)]
pub struct System {
    table: OPTable,
    aux: AuxTable,
}

impl System {
    /// Builds a quadrature rule suited to `params` and the system on it.
    pub fn build(params: &WeightParams, n_max: usize, settings: &QuadratureSettings) -> Result<Self> {
        let rule = rule_for(params, n_max, settings)?;
        Self::build_with_rule(params, n_max, &rule)
    }

    /// Builds the system on a given rule (reused across nearby points so that
    /// finite differences see a smooth quadrature error).
    pub fn build_with_rule(params: &WeightParams, n_max: usize, rule: &QuadratureRule) -> Result<Self> {
        let measure = Measure::new(params, rule)?;
        let table = build_op_table_on(params, n_max, &measure)?;
        let aux = compute_aux_on(params, &table, &measure)?;
        Ok(Self { table, aux })
    }

    pub fn params(&self) -> &WeightParams {
        self.table.params()
    }

    pub fn table(&self) -> &OPTable {
        &self.table
    }

    pub fn aux(&self) -> &AuxTable {
        &self.aux
    }

    pub fn n_max(&self) -> usize {
        self.table.n_max()
    }

    pub fn precision_bits(&self) -> u32 {
        self.table.precision_bits()
    }

    pub fn ln_h(&self, n: usize) -> Float {
        self.table.h()[n].clone().ln()
    }

    pub fn p(&self, n: usize) -> Float {
        self.table.p1()[n].clone()
    }

    pub fn alpha(&self, n: usize) -> Float {
        self.table.alpha_rec()[n].clone()
    }

    pub fn beta(&self, n: usize) -> Float {
        self.table.beta_rec()[n].clone()
    }

    pub fn ln_beta(&self, n: usize) -> Float {
        self.table.beta_rec()[n].clone().ln()
    }

    /// `σ_n = p(n) + n(n + α + Σλ)`.
    pub fn sigma(&self, n: usize) -> Float {
        Float::with_val(self.precision_bits(), &self.table.p1()[n] + sigma_offset(self.params(), n))
    }

    pub fn big_r(&self, n: usize, k: usize) -> Float {
        self.aux.big_r(n)[k].clone()
    }

    pub fn small_r(&self, n: usize, k: usize) -> Float {
        self.aux.small_r(n)[k].clone()
    }

    /// Checks that degree `n` and its neighbours `n - 1`, `n + 1` are available.
    pub fn require_degree(&self, n: usize) -> Result<()> {
        if n == 0 || n + 1 > self.n_max() {
            return Err(Error::Parameter(format!(
                "degree {n} needs 1 <= n <= n_max - 1 = {}",
                self.n_max() as i64 - 1
            )));
        }
        Ok(())
    }

    /// `Σ_k R_{n,k}`.
    pub fn sum_big_r(&self, n: usize) -> Float {
        num::sum(self.precision_bits(), self.aux.big_r(n))
    }
}
