//! KKT reformulation of the operation models and the single-level MPEC.
//!
//! The stationarity rows are generated from the LP data itself, so whatever
//! rows the model builders emit are reflected one-to-one in the KKT system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Division, Instance};
use crate::lp::{
    build_llm_c, build_llm_d, CapacityMarker, Family, LinearProgram, LpSolution, Owner, RowTag,
    SparseRow, VarRole, Variable,
};

/// Stationarity of one primal variable: `omega·A_g[:, var] + v·A_h[:, var] = cost`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityRow {
    pub var: usize,
    /// Coefficients over the inequality multipliers.
    pub omega: SparseRow,
    /// Coefficients over the equality multipliers.
    pub v: SparseRow,
    pub cost: f64,
}

impl StationarityRow {
    pub fn residual(&self, omega: &[f64], v: &[f64]) -> f64 {
        self.cost - self.omega.dot(omega) - self.v.dot(v)
    }
}

/// KKT conditions of a linear program. Inequality row `i` of `primal` and
/// multiplier `omega[i]` form complementarity pair `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktSystem {
    /// Source program with any finite simple bounds appended as rows; all of
    /// its variables are free.
    pub primal: LinearProgram,
    pub stationarity: Vec<StationarityRow>,
    /// Number of rows that came from simple bounds (at the end of the
    /// inequality block).
    pub bound_rows: usize,
}

impl KktSystem {
    pub fn num_pairs(&self) -> usize {
        self.primal.inequalities.len()
    }

    /// Multipliers of this system from a simplex solution of the source LP:
    /// bound rows receive the positive and negative parts of the reduced costs.
    pub fn lift_duals(&self, sol: &LpSolution) -> (Vec<f64>, Vec<f64>) {
        let base = self.primal.inequalities.len() - self.bound_rows;
        let mut omega = sol.omega.clone();
        omega.truncate(base);
        for c in &self.primal.inequalities[base..] {
            let d = match c.tag {
                RowTag::LowerBound { var } => sol.reduced_costs[var].max(0.0),
                RowTag::UpperBound { var } => (-sol.reduced_costs[var]).max(0.0),
                _ => unreachable!("bound rows are tagged"),
            };
            omega.push(d);
        }
        (omega, sol.v.clone())
    }
}

/// Builds stationarity, dual sign and complementarity conditions of `lp`.
pub fn derive_kkt(lp: &LinearProgram) -> KktSystem {
    let mut primal = lp.clone();
    let mut bound_rows = 0;
    for (j, var) in lp.vars.iter().enumerate() {
        if var.lower.is_finite() {
            primal.add_ge(vec![(j, 1.0)], var.lower, RowTag::LowerBound { var: j });
            bound_rows += 1;
        }
        if var.upper.is_finite() {
            primal.add_ge(vec![(j, -1.0)], -var.upper, RowTag::UpperBound { var: j });
            bound_rows += 1;
        }
    }
    for var in &mut primal.vars {
        var.lower = f64::NEG_INFINITY;
        var.upper = f64::INFINITY;
    }

    let n = primal.num_vars();
    let mut g_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, c) in primal.inequalities.iter().enumerate() {
        for &(j, a) in c.row.entries() {
            g_cols[j].push((i, a));
        }
    }
    let mut h_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (m, c) in primal.equalities.iter().enumerate() {
        for &(j, a) in c.row.entries() {
            h_cols[j].push((m, a));
        }
    }
    let stationarity = (0..n)
        .map(|j| StationarityRow {
            var: j,
            omega: SparseRow::new(std::mem::take(&mut g_cols[j])),
            v: SparseRow::new(std::mem::take(&mut h_cols[j])),
            cost: primal.objective[j],
        })
        .collect();
    KktSystem {
        primal,
        stationarity,
        bound_rows,
    }
}

/// Where one embedded operation model lives inside the MPEC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBlock {
    pub owner: Owner,
    pub capacity_var: usize,
    pub x_start: usize,
    pub omega_start: usize,
    pub v_start: usize,
    /// First MPEC inequality row holding this block's primal rows.
    pub row_start: usize,
    /// First MPEC equality row holding this block's primal equalities,
    /// followed by its stationarity rows.
    pub eq_start: usize,
    pub kkt: KktSystem,
}

impl LowerBlock {
    pub fn num_x(&self) -> usize {
        self.kkt.primal.num_vars()
    }
    pub fn num_omega(&self) -> usize {
        self.kkt.primal.inequalities.len()
    }
    pub fn num_v(&self) -> usize {
        self.kkt.primal.equalities.len()
    }
    pub fn x<'a>(&self, sol: &'a [f64]) -> &'a [f64] {
        &sol[self.x_start..self.x_start + self.num_x()]
    }
    pub fn omega<'a>(&self, sol: &'a [f64]) -> &'a [f64] {
        &sol[self.omega_start..self.omega_start + self.num_omega()]
    }
    pub fn v<'a>(&self, sol: &'a [f64]) -> &'a [f64] {
        &sol[self.v_start..self.v_start + self.num_v()]
    }
}

/// A multiplier variable and the MPEC inequality row it complements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplementarityPair {
    pub dual_var: usize,
    pub row: usize,
    pub block: usize,
    pub local_row: usize,
}

/// Single-level program: the upper objective and rows, every operation model's
/// primal rows with capacity offsets bound to the division variables, its
/// stationarity rows, and the complementarity pairs kept on the side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpecModel {
    pub instance: Instance,
    /// Everything except complementarity.
    pub lp: LinearProgram,
    pub peak_var: usize,
    pub s_disco: usize,
    pub s_customer: Vec<usize>,
    /// Customers in order, then the DisCo.
    pub blocks: Vec<LowerBlock>,
    pub pairs: Vec<ComplementarityPair>,
    pub capacity_row: usize,
    pub peak_rows: Vec<usize>,
}

fn capacity_markers(lp: &LinearProgram) -> Vec<Option<CapacityMarker>> {
    let mut out = vec![None; lp.inequalities.len()];
    for m in &lp.capacity_markers {
        out[m.row] = Some(*m);
    }
    out
}

fn embed_block(
    mpec: &mut LinearProgram,
    owner: Owner,
    source: &LinearProgram,
    capacity_var: usize,
) -> LowerBlock {
    let kkt = derive_kkt(source);
    let markers = capacity_markers(source);
    let x_start = mpec.num_vars();
    for var in &kkt.primal.vars {
        mpec.add_var(var.clone(), 0.0);
    }
    let omega_start = mpec.num_vars();
    for i in 0..kkt.num_pairs() {
        mpec.add_var(
            Variable::bounded(
                format!("w_{owner}_{i}"),
                0.0,
                f64::INFINITY,
                VarRole::IneqDual { owner, row: i },
            ),
            0.0,
        );
    }
    let v_start = mpec.num_vars();
    for m in 0..kkt.primal.equalities.len() {
        mpec.add_var(
            Variable::free(format!("v_{owner}_{m}"), VarRole::EqDual { owner, row: m }),
            0.0,
        );
    }

    let row_start = mpec.inequalities.len();
    for (i, c) in kkt.primal.inequalities.iter().enumerate() {
        let mut entries = c.row.shifted(x_start).entries().to_vec();
        let rhs = match markers.get(i).copied().flatten() {
            // A x >= base + p S  becomes  A x - p S >= base
            Some(m) => {
                entries.push((capacity_var, -m.per_capacity));
                m.base
            }
            None => c.rhs,
        };
        mpec.add_ge(entries, rhs, c.tag);
    }
    let eq_start = mpec.equalities.len();
    for c in &kkt.primal.equalities {
        mpec.add_eq(c.row.shifted(x_start).entries().to_vec(), c.rhs, c.tag);
    }
    for s in &kkt.stationarity {
        let mut entries = s.omega.shifted(omega_start).entries().to_vec();
        entries.extend_from_slice(s.v.shifted(v_start).entries());
        mpec.add_eq(entries, s.cost, RowTag::Stationarity { owner, var: s.var });
    }
    LowerBlock {
        owner,
        capacity_var,
        x_start,
        omega_start,
        v_start,
        row_start,
        eq_start,
        kkt,
    }
}

/// Builds the single-level reformulation of the division problem.
pub fn assemble_mpec(instance: &Instance) -> Result<MpecModel> {
    let slots = instance.slots();
    let customers = instance.customers();
    let total = instance.storage.total_capacity;
    let dt = instance.dt();
    let w = instance.weights;
    let mut lp = LinearProgram::new();

    let peak_var = lp.add_var(Variable::free("peak", VarRole::SystemPeak), w.lambda1);
    let s_disco = lp.add_var(
        Variable::bounded("s_d", 0.0, total, VarRole::Capacity { owner: Owner::Disco }),
        0.0,
    );
    let s_customer: Vec<usize> = (0..customers)
        .map(|n| {
            let owner = Owner::Customer(n);
            lp.add_var(
                Variable::bounded(format!("s_{owner}"), 0.0, total, VarRole::Capacity { owner }),
                0.0,
            )
        })
        .collect();

    let mut blocks = Vec::with_capacity(customers + 1);
    for (n, &cap_var) in s_customer.iter().enumerate() {
        let source = build_llm_c(instance, n, total)?;
        blocks.push(embed_block(&mut lp, Owner::Customer(n), &source, cap_var));
    }
    let source = build_llm_d(instance, total)?;
    blocks.push(embed_block(&mut lp, Owner::Disco, &source, s_disco));

    // total capacity split
    let mut split = vec![(s_disco, -1.0)];
    split.extend(s_customer.iter().map(|&j| (j, -1.0)));
    let capacity_row = lp.add_ge(split, -total, RowTag::CapacitySplit);

    // peak above every slot's net load, and the flow part of the objective
    let mut peak_rows = Vec::with_capacity(slots);
    for t in 0..slots {
        let mut entries = vec![(peak_var, 1.0)];
        for b in &blocks {
            entries.push((b.x_start + t, -1.0));
            entries.push((b.x_start + slots + t, 1.0));
        }
        peak_rows.push(lp.add_ge(
            entries,
            instance.loads.system_load[t],
            RowTag::PeakLink { t },
        ));
    }
    let mut offset = 0.0;
    for t in 0..slots {
        let price = (w.lambda2 * instance.prices.lmp[t] + w.lambda3 * instance.prices.tou[t]) * dt;
        offset += price * instance.loads.system_load[t];
        for b in &blocks {
            lp.objective[b.x_start + t] += price;
            lp.objective[b.x_start + slots + t] -= price;
        }
    }
    lp.objective_offset = offset;

    let pairs = blocks
        .iter()
        .enumerate()
        .flat_map(|(bi, b)| {
            (0..b.num_omega()).map(move |i| ComplementarityPair {
                dual_var: b.omega_start + i,
                row: b.row_start + i,
                block: bi,
                local_row: i,
            })
        })
        .collect();

    Ok(MpecModel {
        instance: instance.clone(),
        lp,
        peak_var,
        s_disco,
        s_customer,
        blocks,
        pairs,
        capacity_row,
        peak_rows,
    })
}

impl MpecModel {
    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// `(omega_i, g_i)` for every pair at point `x`.
    pub fn pair_values(&self, x: &[f64]) -> Vec<(f64, f64)> {
        self.pairs
            .iter()
            .map(|p| (x[p.dual_var], self.lp.inequalities[p.row].residual(x)))
            .collect()
    }

    /// Largest `max(omega_i, 0) * max(g_i, 0)` over all pairs.
    pub fn complementarity_violation(&self, x: &[f64]) -> f64 {
        self.pair_values(x)
            .into_iter()
            .map(|(w, g)| w.max(0.0) * g.max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn division(&self, x: &[f64]) -> Division {
        Division {
            s_disco: x[self.s_disco],
            s_customer: self.s_customer.iter().map(|&j| x[j]).collect(),
        }
    }

    /// Pins the DisCo share to `value`.
    pub fn fix_disco_share(&mut self, value: f64) {
        let v = &mut self.lp.vars[self.s_disco];
        v.lower = value;
        v.upper = value;
    }

    /// Requires the shares to use up the whole capacity.
    pub fn require_full_split(&mut self) {
        let mut entries = vec![(self.s_disco, 1.0)];
        entries.extend(self.s_customer.iter().map(|&j| (j, 1.0)));
        let total = self.instance.storage.total_capacity;
        self.lp.add_ge(entries, total, RowTag::CapacitySplit);
    }

    /// Pins every share to `division`.
    pub fn fix_division(&mut self, division: &Division) -> Result<()> {
        if division.s_customer.len() != self.s_customer.len() {
            return Err(Error::Dimension(format!(
                "division has {} customer shares for {} customers",
                division.s_customer.len(),
                self.s_customer.len()
            )));
        }
        self.fix_disco_share(division.s_disco);
        for (&j, &s) in self.s_customer.iter().zip(&division.s_customer) {
            let v = &mut self.lp.vars[j];
            v.lower = s;
            v.upper = s;
        }
        Ok(())
    }

    fn pair_family(&self, pair: &ComplementarityPair) -> Option<Family> {
        match self.lp.inequalities[pair.row].tag {
            RowTag::Family { family, .. } => Some(family),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigMPolicy {
    /// Use interval bounds on the primal side where the row family allows.
    pub exact_primal: bool,
    /// Dual-side constant; `None` derives it from the prices.
    pub dual_m: Option<f64>,
    /// Multiplier on `max(|lmp|, tou, alpha)·dt` for the derived dual constant.
    pub dual_factor: f64,
    pub escalation: f64,
    pub max_rounds: usize,
}

impl Default for BigMPolicy {
    fn default() -> Self {
        BigMPolicy {
            exact_primal: true,
            dual_m: None,
            dual_factor: 1000.0,
            escalation: 10.0,
            max_rounds: 3,
        }
    }
}

impl BigMPolicy {
    pub fn check(&self) -> Result<()> {
        let ok = self.dual_m.is_none_or(|m| m.is_finite() && m > 0.0)
            && self.dual_factor.is_finite()
            && self.dual_factor > 0.0
            && self.escalation.is_finite()
            && self.escalation > 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid big-M policy {self:?}")))
        }
    }

    pub fn dual_constant(&self, instance: &Instance) -> f64 {
        self.dual_m.unwrap_or_else(|| {
            let scale = instance
                .prices
                .lmp
                .iter()
                .map(|p| p.abs())
                .chain(instance.prices.tou.iter().copied())
                .fold(instance.weights.alpha, f64::max);
            (self.dual_factor * scale * instance.dt()).max(1.0)
        })
    }

    /// Same policy with the guessed constants multiplied by the escalation factor.
    pub fn escalated(&self, instance: &Instance) -> BigMPolicy {
        BigMPolicy {
            dual_m: Some(self.dual_constant(instance) * self.escalation),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrimalRule {
    /// Interval bound valid for every lower-level feasible point.
    Exact,
    /// No interval bound available; the dual constant stands in.
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigMRecord {
    pub pair: usize,
    pub selector: usize,
    pub dual_var: usize,
    pub row: usize,
    pub dual_m: f64,
    pub primal_m: f64,
    pub primal_rule: PrimalRule,
}

/// Mixed 0-1 program. `big_m` is empty unless it came from an MPEC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    pub lp: LinearProgram,
    pub binaries: Vec<usize>,
    pub big_m: Vec<BigMRecord>,
    pub warnings: Vec<String>,
}

impl MilpModel {
    /// Wraps `lp` and clamps the listed variables to `[0, 1]`.
    pub fn new(mut lp: LinearProgram, binaries: Vec<usize>) -> Result<Self> {
        for &j in &binaries {
            let v = lp
                .vars
                .get_mut(j)
                .ok_or_else(|| Error::Dimension(format!("binary index {j} out of range")))?;
            v.lower = v.lower.max(0.0);
            v.upper = v.upper.min(1.0);
        }
        Ok(MilpModel {
            lp,
            binaries,
            big_m: Vec::new(),
            warnings: Vec::new(),
        })
    }
}

fn primal_bound(mpec: &MpecModel, pair: &ComplementarityPair) -> Option<f64> {
    let inst = &mpec.instance;
    let st = &inst.storage;
    let total = st.total_capacity;
    let power = st.power_ratio * total;
    let bound = match mpec.pair_family(pair)? {
        Family::SocLower | Family::SocUpper => (st.soc_upper - st.soc_lower) * total,
        Family::DischargeNonneg
        | Family::ChargeNonneg
        | Family::DischargeCap
        | Family::ChargeCap => power,
        Family::PeakBound | Family::ValleyBound => {
            let Owner::Customer(n) = mpec.blocks[pair.block].owner else {
                return None;
            };
            let max_load = inst.loads.customer_load[n]
                .iter()
                .copied()
                .fold(0.0, f64::max);
            2.0 * max_load + 2.0 * power
        }
    };
    bound.is_finite().then_some(bound)
}

/// Smallest constant ever used on either side; keeps the selector rows
/// meaningful when the storage is tiny or absent.
const MIN_BIG_M: f64 = 1.0;

/// Replaces every complementarity pair by `omega <= M_w u` and
/// `g <= M_g (1 - u)` with a fresh binary `u`.
pub fn linearize_big_m(mpec: &MpecModel, policy: &BigMPolicy) -> Result<MilpModel> {
    policy.check()?;
    let dual_m = policy.dual_constant(&mpec.instance);
    let mut lp = mpec.lp.clone();
    let mut binaries = Vec::with_capacity(mpec.num_pairs());
    let mut big_m = Vec::with_capacity(mpec.num_pairs());
    let mut warnings = Vec::new();
    for (k, pair) in mpec.pairs.iter().enumerate() {
        let exact = if policy.exact_primal {
            primal_bound(mpec, pair)
        } else {
            None
        };
        let (primal_m, rule) = match exact {
            Some(b) => (b.max(MIN_BIG_M), PrimalRule::Exact),
            None => {
                if policy.exact_primal {
                    warnings.push(format!(
                        "pair {k} (row {}) has no finite primal bound; using {dual_m}",
                        pair.row
                    ));
                }
                (dual_m, PrimalRule::Fallback)
            }
        };
        let u = lp.add_var(
            Variable::bounded(format!("u_{k}"), 0.0, 1.0, VarRole::Selector { pair: k }),
            0.0,
        );
        binaries.push(u);
        // M_w u - omega >= 0
        lp.add_ge(
            vec![(u, dual_m), (pair.dual_var, -1.0)],
            0.0,
            RowTag::SelectorDual { pair: k },
        );
        // g <= M_g (1 - u)  with g = row·x - rhs
        let src = &mpec.lp.inequalities[pair.row];
        let mut entries = src.row.negated().entries().to_vec();
        entries.push((u, -primal_m));
        lp.add_ge(entries, -primal_m - src.rhs, RowTag::SelectorPrimal { pair: k });
        big_m.push(BigMRecord {
            pair: k,
            selector: u,
            dual_var: pair.dual_var,
            row: pair.row,
            dual_m,
            primal_m,
            primal_rule: rule,
        });
    }
    Ok(MilpModel {
        lp,
        binaries,
        big_m,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BigMSide {
    Dual,
    Primal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BindingPair {
    pub pair: usize,
    pub side: BigMSide,
    pub value: f64,
    pub m: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BigMReport {
    /// Pairs pressed against a guessed constant; the solution may be truncated.
    pub binding: Vec<BindingPair>,
    /// Pairs sitting on an exact interval bound. Informational: the bound holds
    /// for every feasible point, so reaching it cannot cut anything off.
    pub at_exact_bound: Vec<BindingPair>,
}

impl BigMReport {
    pub fn certifies(&self) -> bool {
        self.binding.is_empty()
    }
}

/// Lists pairs whose multiplier or slack lies within `tol·M` of its constant.
pub fn validate_big_m(milp: &MilpModel, solution: &[f64], tol: f64) -> BigMReport {
    let mut report = BigMReport::default();
    for rec in &milp.big_m {
        let w = solution[rec.dual_var];
        if w >= rec.dual_m - tol * rec.dual_m {
            report.binding.push(BindingPair {
                pair: rec.pair,
                side: BigMSide::Dual,
                value: w,
                m: rec.dual_m,
            });
        }
        let g = milp.lp.inequalities[rec.row].residual(solution);
        if g >= rec.primal_m - tol * rec.primal_m {
            let entry = BindingPair {
                pair: rec.pair,
                side: BigMSide::Primal,
                value: g,
                m: rec.primal_m,
            };
            match rec.primal_rule {
                PrimalRule::Exact => report.at_exact_bound.push(entry),
                PrimalRule::Fallback => report.binding.push(entry),
            }
        }
    }
    report
}
