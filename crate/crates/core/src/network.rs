//! Rule-fact network domain types and structural validation.
//!
//! A network is a directed acyclic graph of facts (nodes holding values in
//! `[0, 1]`) and binary weighted rules (each combining two premise facts into
//! one target fact). Networks are built through [`NetworkBuilder`], which
//! rejects anything that would violate the structural invariants, so a
//! [`RuleFactNetwork`] value is always well formed:
//!
//! - exactly one fact has kind `output`
//! - rule weights lie in `[0, 1]` and sum to 1
//! - the premise -> target graph is acyclic
//! - every non-input fact is the target of exactly one rule
//! - the output fact is reachable from at least one input fact
//!
//! A built network is immutable apart from its rule weights (see the
//! training module); it can be shared freely across threads for evaluation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Tolerance for the `w1 + w2 = 1` check when validating foreign documents.
/// Internally weights are kept exact by storing `w2 = 1 - w1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Stable identifier of a fact, unique within a network.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactId(String);

impl FactId {
    pub fn new(id: impl Into<String>) -> Self {
        FactId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FactId {
    fn from(s: &str) -> Self {
        FactId(s.to_owned())
    }
}

impl From<String> for FactId {
    fn from(s: String) -> Self {
        FactId(s)
    }
}

/// Stable identifier of a rule, unique within a network.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleId(String);

impl RuleId {
    pub fn new(id: impl Into<String>) -> Self {
        RuleId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RuleId {
    fn from(s: &str) -> Self {
        RuleId(s.to_owned())
    }
}

/// Role of a fact in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactKind {
    /// Assigned from data at evaluation time.
    Input,
    /// Computed by a rule; carries no external meaning of its own.
    Intermediate,
    /// Computed by a rule; the network's single decision value.
    Output,
}

/// A named node. Values are not stored on the fact itself; they exist only
/// in assignments and evaluation results.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub id: FactId,
    pub name: String,
    pub kind: FactKind,
}

impl Fact {
    pub fn new(id: impl Into<FactId>, name: impl Into<String>, kind: FactKind) -> Self {
        Fact { id: id.into(), name: name.into(), kind }
    }

    pub fn input(id: &str) -> Self {
        Fact::new(id, id, FactKind::Input)
    }

    pub fn intermediate(id: &str) -> Self {
        Fact::new(id, id, FactKind::Intermediate)
    }

    pub fn output(id: &str) -> Self {
        Fact::new(id, id, FactKind::Output)
    }
}

/// Binary weighted combiner: `target = w1 * premise1 + w2 * premise2` with
/// `w1 + w2 = 1`, so the target value is a convex combination of the premises.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: RuleId,
    pub premise1: FactId,
    pub premise2: FactId,
    pub target: FactId,
    w1: f64,
    w2: f64,
}

impl Rule {
    pub fn new(
        id: impl Into<RuleId>,
        premise1: impl Into<FactId>,
        premise2: impl Into<FactId>,
        target: impl Into<FactId>,
        w1: f64,
        w2: f64,
    ) -> Self {
        Rule {
            id: id.into(),
            premise1: premise1.into(),
            premise2: premise2.into(),
            target: target.into(),
            w1,
            w2,
        }
    }

    pub fn w1(&self) -> f64 {
        self.w1
    }

    pub fn w2(&self) -> f64 {
        self.w2
    }

    /// Set `w1`, clamping to `[0, 1]`; `w2` is defined as `1 - w1` so the
    /// pair sums to 1 exactly.
    pub(crate) fn set_w1(&mut self, w1: f64) {
        self.w1 = w1.clamp(0.0, 1.0);
        self.w2 = 1.0 - self.w1;
    }
}

/// A single validation finding. Errors make the network unusable; warnings
/// flag suspicious but evaluable structure.
#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    EmptyFactId,
    EmptyRuleId,
    DuplicateFactId(FactId),
    DuplicateRuleId(RuleId),
    MissingOutputFact,
    MultipleOutputFacts(Vec<FactId>),
    OutputFieldMismatch { declared: FactId },
    UnknownFact { rule: RuleId, fact: FactId },
    PremisesEqual { rule: RuleId },
    TargetIsPremise { rule: RuleId },
    TargetIsInput { rule: RuleId, fact: FactId },
    WeightOutOfRange { rule: RuleId, value: f64 },
    WeightSumViolation { rule: RuleId, sum: f64 },
    DuplicateTarget { fact: FactId, rules: Vec<RuleId> },
    MissingProducer { fact: FactId },
    CycleDetected { fact: FactId },
    OutputUnreachable,
    UnreachableInput { fact: FactId },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::EmptyFactId => write!(f, "empty fact id"),
            Finding::EmptyRuleId => write!(f, "empty rule id"),
            Finding::DuplicateFactId(id) => write!(f, "duplicate fact id '{id}'"),
            Finding::DuplicateRuleId(id) => write!(f, "duplicate rule id '{id}'"),
            Finding::MissingOutputFact => write!(f, "no output fact declared"),
            Finding::MultipleOutputFacts(ids) => {
                let ids: Vec<&str> = ids.iter().map(|i| i.as_str()).collect();
                write!(f, "more than one output fact: {}", ids.join(", "))
            }
            Finding::OutputFieldMismatch { declared } => {
                write!(f, "declared output '{declared}' is not a fact of kind output")
            }
            Finding::UnknownFact { rule, fact } => {
                write!(f, "rule '{rule}' references unknown fact '{fact}'")
            }
            Finding::PremisesEqual { rule } => {
                write!(f, "rule '{rule}' uses the same fact for both premises")
            }
            Finding::TargetIsPremise { rule } => {
                write!(f, "rule '{rule}' targets one of its own premises")
            }
            Finding::TargetIsInput { rule, fact } => {
                write!(f, "rule '{rule}' targets input fact '{fact}'")
            }
            Finding::WeightOutOfRange { rule, value } => {
                write!(f, "rule '{rule}' has weight {value} outside [0, 1]")
            }
            Finding::WeightSumViolation { rule, sum } => {
                write!(f, "rule '{rule}' weights sum to {sum}, expected 1")
            }
            Finding::DuplicateTarget { fact, rules } => {
                let ids: Vec<&str> = rules.iter().map(|r| r.as_str()).collect();
                write!(f, "fact '{fact}' is the target of multiple rules: {}", ids.join(", "))
            }
            Finding::MissingProducer { fact } => {
                write!(f, "non-input fact '{fact}' is not the target of any rule")
            }
            Finding::CycleDetected { fact } => {
                write!(f, "cycle through fact '{fact}'")
            }
            Finding::OutputUnreachable => {
                write!(f, "output fact is not reachable from any input fact")
            }
            Finding::UnreachableInput { fact } => {
                write!(f, "input fact '{fact}' has no path to the output")
            }
        }
    }
}

/// Outcome of structural validation. Empty (no errors, no warnings) iff the
/// network is fully well formed with nothing suspicious.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    /// No errors; the network can be evaluated.
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    /// No errors and no warnings.
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty() && self.warnings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fmt_report!();
}

macro_rules! fmt_report {
    () => {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            for e in &self.errors {
                writeln!(f, "error: {e}")?;
            }
            for w in &self.warnings {
                writeln!(f, "warning: {w}")?;
            }
            if self.is_clean() {
                writeln!(f, "ok: network is well formed")?;
            }
            Ok(())
        }
    };
}
use fmt_report;

/// Errors raised while constructing a network.
#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum NetworkError {
    #[error("fact id '{0}' already present")]
    DuplicateId(FactId),
    #[error("network already has output fact '{0}'")]
    SecondOutputFact(FactId),
    #[error("empty id")]
    EmptyId,
    #[error("rule '{rule}' references unknown fact '{fact}'")]
    UnknownFact { rule: RuleId, fact: FactId },
    #[error("rule '{rule}' weights ({w1}, {w2}) do not sum to 1")]
    WeightSumViolation { rule: RuleId, w1: f64, w2: f64 },
    #[error("rule '{rule}' weight {value} outside [0, 1]")]
    WeightOutOfRange { rule: RuleId, value: f64 },
    #[error("rule '{0}' id already present")]
    DuplicateRuleId(RuleId),
    #[error("fact '{fact}' is already the target of rule '{existing}'")]
    DuplicateTarget { fact: FactId, existing: RuleId },
    #[error("rule '{0}' would introduce a cycle")]
    CycleIntroduced(RuleId),
    #[error("rule '{0}' uses the same fact for both premises")]
    PremisesEqual(RuleId),
    #[error("rule '{0}' targets one of its own premises")]
    TargetIsPremise(RuleId),
    #[error("rule '{rule}' targets input fact '{fact}'")]
    TargetIsInput { rule: RuleId, fact: FactId },
    #[error("network is not well formed:\n{0}")]
    Invalid(String),
}

/// Incremental constructor. Each `add_*` call enforces the local invariants;
/// `build` runs full validation and freezes the evaluation order.
#[derive(Debug, Clone, Default)]
pub struct NetworkBuilder {
    facts: BTreeMap<FactId, Fact>,
    rules: Vec<Rule>,
    output: Option<FactId>,
    metadata: serde_json::Map<String, serde_json::Value>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a fact. Rejects duplicate ids and a second output fact.
    pub fn add_fact(&mut self, fact: Fact) -> Result<&mut Self, NetworkError> {
        if fact.id.as_str().is_empty() {
            return Err(NetworkError::EmptyId);
        }
        if self.facts.contains_key(&fact.id) {
            return Err(NetworkError::DuplicateId(fact.id));
        }
        if fact.kind == FactKind::Output {
            if let Some(existing) = &self.output {
                return Err(NetworkError::SecondOutputFact(existing.clone()));
            }
            self.output = Some(fact.id.clone());
        }
        self.facts.insert(fact.id.clone(), fact);
        Ok(self)
    }

    /// Add a rule. All referenced facts must exist, weights must be valid,
    /// the target must not already be produced, and the new edges must keep
    /// the premise -> target graph acyclic.
    pub fn add_rule(&mut self, rule: Rule) -> Result<&mut Self, NetworkError> {
        if rule.id.as_str().is_empty() {
            return Err(NetworkError::EmptyId);
        }
        if self.rules.iter().any(|r| r.id == rule.id) {
            return Err(NetworkError::DuplicateRuleId(rule.id));
        }
        for fact in [&rule.premise1, &rule.premise2, &rule.target] {
            if !self.facts.contains_key(fact) {
                return Err(NetworkError::UnknownFact { rule: rule.id, fact: fact.clone() });
            }
        }
        for w in [rule.w1, rule.w2] {
            if !(0.0..=1.0).contains(&w) {
                return Err(NetworkError::WeightOutOfRange { rule: rule.id, value: w });
            }
        }
        if (rule.w1 + rule.w2 - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(NetworkError::WeightSumViolation {
                rule: rule.id,
                w1: rule.w1,
                w2: rule.w2,
            });
        }
        if rule.premise1 == rule.premise2 {
            return Err(NetworkError::PremisesEqual(rule.id));
        }
        if rule.target == rule.premise1 || rule.target == rule.premise2 {
            return Err(NetworkError::TargetIsPremise(rule.id));
        }
        if self.facts[&rule.target].kind == FactKind::Input {
            return Err(NetworkError::TargetIsInput { rule: rule.id, fact: rule.target });
        }
        if let Some(existing) = self.rules.iter().find(|r| r.target == rule.target) {
            return Err(NetworkError::DuplicateTarget {
                fact: rule.target,
                existing: existing.id.clone(),
            });
        }
        if self.creates_cycle(&rule) {
            return Err(NetworkError::CycleIntroduced(rule.id));
        }
        self.rules.push(rule);
        Ok(self)
    }

    pub fn metadata_mut(&mut self) -> &mut serde_json::Map<String, serde_json::Value> {
        &mut self.metadata
    }

    /// Depth-first search from the new rule's target through existing
    /// premise -> target edges, looking for a path back to a premise.
    fn creates_cycle(&self, rule: &Rule) -> bool {
        let mut downstream = BTreeSet::new();
        let mut stack = vec![&rule.target];
        while let Some(fact) = stack.pop() {
            if !downstream.insert(fact.clone()) {
                continue;
            }
            if *fact == rule.premise1 || *fact == rule.premise2 {
                return true;
            }
            for r in &self.rules {
                if r.premise1 == *fact || r.premise2 == *fact {
                    stack.push(&r.target);
                }
            }
        }
        false
    }

    /// Validate the full structure and freeze it into a network.
    pub fn build(self) -> Result<RuleFactNetwork, NetworkError> {
        let report = validate_parts(
            self.facts.values(),
            &self.rules,
            self.output.as_ref(),
        );
        if !report.is_valid() {
            return Err(NetworkError::Invalid(report.to_string()));
        }
        let output = self.output.expect("validated network has an output fact");
        let index = NetworkIndex::build(&self.facts, &self.rules, &output)
            .expect("validated network is acyclic");
        Ok(RuleFactNetwork {
            facts: self.facts,
            rules: self.rules,
            output,
            metadata: self.metadata,
            index,
        })
    }
}

/// Derived lookups for fast evaluation, rebuilt whenever a network is
/// constructed. Positions index into the sorted fact id list.
#[derive(Debug, Clone)]
pub(crate) struct NetworkIndex {
    /// All fact ids, sorted.
    pub fact_ids: Vec<FactId>,
    /// Input fact ids, sorted.
    pub input_ids: Vec<FactId>,
    /// Dense position of each input fact.
    pub input_pos: Vec<usize>,
    /// Rule indices in evaluation order (topological, ties by rule id).
    pub eval_order: Vec<usize>,
    /// Per rule: dense positions of (premise1, premise2).
    pub premise_pos: Vec<[usize; 2]>,
    /// Per rule: dense position of the target fact.
    pub target_pos: Vec<usize>,
    /// Rule indices lying on a directed path to the output fact.
    pub contributing: Vec<usize>,
    /// Dense position of the output fact.
    pub output_pos: usize,
}

impl NetworkIndex {
    fn build(
        facts: &BTreeMap<FactId, Fact>,
        rules: &[Rule],
        output: &FactId,
    ) -> Option<NetworkIndex> {
        let fact_ids: Vec<FactId> = facts.keys().cloned().collect();
        let pos: HashMap<&FactId, usize> =
            fact_ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let input_ids: Vec<FactId> = facts
            .values()
            .filter(|f| f.kind == FactKind::Input)
            .map(|f| f.id.clone())
            .collect();
        let input_pos: Vec<usize> = input_ids.iter().map(|id| pos[id]).collect();
        let premise_pos: Vec<[usize; 2]> =
            rules.iter().map(|r| [pos[&r.premise1], pos[&r.premise2]]).collect();
        let target_pos: Vec<usize> = rules.iter().map(|r| pos[&r.target]).collect();

        let eval_order = topo_sort(facts, rules)?;

        // Backward reachability from the output over producer edges.
        let producer: HashMap<&FactId, usize> =
            rules.iter().enumerate().map(|(i, r)| (&r.target, i)).collect();
        let mut contributing_set = vec![false; rules.len()];
        let mut stack = vec![output];
        let mut seen = BTreeSet::new();
        while let Some(fact) = stack.pop() {
            if !seen.insert(fact.clone()) {
                continue;
            }
            if let Some(&ri) = producer.get(fact) {
                contributing_set[ri] = true;
                stack.push(&rules[ri].premise1);
                stack.push(&rules[ri].premise2);
            }
        }
        let contributing: Vec<usize> =
            (0..rules.len()).filter(|&i| contributing_set[i]).collect();

        Some(NetworkIndex {
            fact_ids,
            input_ids,
            input_pos,
            eval_order,
            premise_pos,
            target_pos,
            contributing,
            output_pos: pos[output],
        })
    }
}

/// Kahn's algorithm over rules. A rule is ready once both premises are
/// available (input facts, or targets of already emitted rules). Among ready
/// rules the smallest rule id goes first, which makes the order unique.
fn topo_sort(facts: &BTreeMap<FactId, Fact>, rules: &[Rule]) -> Option<Vec<usize>> {
    let mut available: BTreeSet<&FactId> = facts
        .values()
        .filter(|f| f.kind == FactKind::Input)
        .map(|f| &f.id)
        .collect();
    let mut ready: BTreeMap<&RuleId, usize> = BTreeMap::new();
    let mut pending: Vec<usize> = Vec::new();
    for (i, r) in rules.iter().enumerate() {
        if available.contains(&r.premise1) && available.contains(&r.premise2) {
            ready.insert(&r.id, i);
        } else {
            pending.push(i);
        }
    }
    let mut order = Vec::with_capacity(rules.len());
    while let Some((_, i)) = ready.pop_first() {
        order.push(i);
        available.insert(&rules[i].target);
        pending.retain(|&j| {
            let r = &rules[j];
            if available.contains(&r.premise1) && available.contains(&r.premise2) {
                ready.insert(&r.id, j);
                false
            } else {
                true
            }
        });
    }
    if order.len() == rules.len() {
        Some(order)
    } else {
        None
    }
}

/// An acyclic collection of facts and rules with one designated output fact.
/// Immutable once built, except for rule weights which the trainer adjusts
/// through a controlled setter that preserves the weight invariants.
#[derive(Debug, Clone)]
pub struct RuleFactNetwork {
    facts: BTreeMap<FactId, Fact>,
    rules: Vec<Rule>,
    output: FactId,
    metadata: serde_json::Map<String, serde_json::Value>,
    pub(crate) index: NetworkIndex,
}

impl RuleFactNetwork {
    pub fn builder() -> NetworkBuilder {
        NetworkBuilder::new()
    }

    pub fn facts(&self) -> impl Iterator<Item = &Fact> {
        self.facts.values()
    }

    pub fn fact(&self, id: &FactId) -> Option<&Fact> {
        self.facts.get(id)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule_by_id(&self, id: &RuleId) -> Option<&Rule> {
        self.rules.iter().find(|r| &r.id == id)
    }

    pub fn output(&self) -> &FactId {
        &self.output
    }

    pub fn metadata(&self) -> &serde_json::Map<String, serde_json::Value> {
        &self.metadata
    }

    pub fn fact_count(&self) -> usize {
        self.facts.len()
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    /// Input fact ids in sorted order.
    pub fn input_facts(&self) -> &[FactId] {
        &self.index.input_ids
    }

    /// Number of rules that use the given fact as a premise.
    pub fn fanout(&self, fact: &FactId) -> usize {
        self.rules
            .iter()
            .filter(|r| &r.premise1 == fact || &r.premise2 == fact)
            .count()
    }

    /// Rule ids in evaluation order: every rule appears after the rules
    /// producing its premises, ties broken by rule id.
    pub fn topological_order(&self) -> Vec<RuleId> {
        self.index.eval_order.iter().map(|&i| self.rules[i].id.clone()).collect()
    }

    /// Re-run full structural validation. Construction already guarantees a
    /// valid structure, so on a built network the report carries at most
    /// warnings (for example inputs with no path to the output).
    pub fn validate(&self) -> ValidationReport {
        validate_parts(self.facts.values(), &self.rules, Some(&self.output))
    }

    pub(crate) fn training_parts(&mut self) -> (&mut [Rule], &NetworkIndex) {
        (&mut self.rules, &self.index)
    }

    pub(crate) fn set_w1(&mut self, rule_index: usize, w1: f64) {
        self.rules[rule_index].set_w1(w1);
    }
}

/// Validate facts, rules, and the declared output against every structural
/// invariant. Works on any collection, including ones parsed from foreign
/// files that the builder would have rejected.
pub(crate) fn validate_parts<'a>(
    facts: impl IntoIterator<Item = &'a Fact>,
    rules: &[Rule],
    declared_output: Option<&FactId>,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut by_id: BTreeMap<&FactId, &Fact> = BTreeMap::new();
    let mut outputs: Vec<FactId> = Vec::new();

    for fact in facts {
        if fact.id.as_str().is_empty() {
            report.errors.push(Finding::EmptyFactId);
        }
        if by_id.insert(&fact.id, fact).is_some() {
            report.errors.push(Finding::DuplicateFactId(fact.id.clone()));
        }
        if fact.kind == FactKind::Output {
            outputs.push(fact.id.clone());
        }
    }

    match outputs.len() {
        0 => report.errors.push(Finding::MissingOutputFact),
        1 => {
            if let Some(declared) = declared_output {
                if *declared != outputs[0] {
                    report.errors.push(Finding::OutputFieldMismatch { declared: declared.clone() });
                }
            }
        }
        _ => report.errors.push(Finding::MultipleOutputFacts(outputs.clone())),
    }

    let mut rule_ids = BTreeSet::new();
    let mut targets: BTreeMap<&FactId, Vec<RuleId>> = BTreeMap::new();
    for rule in rules {
        if rule.id.as_str().is_empty() {
            report.errors.push(Finding::EmptyRuleId);
        }
        if !rule_ids.insert(&rule.id) {
            report.errors.push(Finding::DuplicateRuleId(rule.id.clone()));
        }
        let mut known = true;
        for fact in [&rule.premise1, &rule.premise2, &rule.target] {
            if !by_id.contains_key(fact) {
                report.errors.push(Finding::UnknownFact {
                    rule: rule.id.clone(),
                    fact: fact.clone(),
                });
                known = false;
            }
        }
        if rule.premise1 == rule.premise2 {
            report.errors.push(Finding::PremisesEqual { rule: rule.id.clone() });
        }
        if rule.target == rule.premise1 || rule.target == rule.premise2 {
            report.errors.push(Finding::TargetIsPremise { rule: rule.id.clone() });
        }
        if known && by_id[&rule.target].kind == FactKind::Input {
            report.errors.push(Finding::TargetIsInput {
                rule: rule.id.clone(),
                fact: rule.target.clone(),
            });
        }
        for w in [rule.w1, rule.w2] {
            if !(0.0..=1.0).contains(&w) {
                report.errors.push(Finding::WeightOutOfRange {
                    rule: rule.id.clone(),
                    value: w,
                });
            }
        }
        let sum = rule.w1 + rule.w2;
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            report.errors.push(Finding::WeightSumViolation { rule: rule.id.clone(), sum });
        }
        targets.entry(&rule.target).or_default().push(rule.id.clone());
    }

    for (fact, producing) in &targets {
        if producing.len() > 1 {
            report.errors.push(Finding::DuplicateTarget {
                fact: (*fact).clone(),
                rules: producing.clone(),
            });
        }
    }
    for fact in by_id.values() {
        if fact.kind != FactKind::Input && !targets.contains_key(&fact.id) {
            report.errors.push(Finding::MissingProducer { fact: fact.id.clone() });
        }
    }

    // Cycle detection over premise -> target edges, facts as nodes.
    let facts_sorted: Vec<&Fact> = by_id.values().copied().collect();
    if let Some(fact) = find_cycle(&facts_sorted, rules) {
        report.errors.push(Finding::CycleDetected { fact });
    } else if report.errors.is_empty() {
        // Reachability checks only make sense on otherwise sound structure.
        let output = &outputs[0];
        let mut upstream: BTreeSet<&FactId> = BTreeSet::new();
        let producer: BTreeMap<&FactId, &Rule> =
            rules.iter().map(|r| (&r.target, r)).collect();
        let mut stack = vec![output];
        while let Some(fact) = stack.pop() {
            if !upstream.insert(fact) {
                continue;
            }
            if let Some(r) = producer.get(fact) {
                stack.push(&r.premise1);
                stack.push(&r.premise2);
            }
        }
        let mut any_input_reaches = false;
        for fact in &facts_sorted {
            if fact.kind == FactKind::Input {
                if upstream.contains(&fact.id) {
                    any_input_reaches = true;
                } else {
                    report.warnings.push(Finding::UnreachableInput { fact: fact.id.clone() });
                }
            }
        }
        if !any_input_reaches {
            report.errors.push(Finding::OutputUnreachable);
        }
    }

    report
}

/// Iterative DFS cycle search; returns a fact on a cycle, if any.
fn find_cycle(facts: &[&Fact], rules: &[Rule]) -> Option<FactId> {
    let pos: HashMap<&FactId, usize> =
        facts.iter().enumerate().map(|(i, f)| (&f.id, i)).collect();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); facts.len()];
    for rule in rules {
        if let (Some(&p1), Some(&p2), Some(&t)) =
            (pos.get(&rule.premise1), pos.get(&rule.premise2), pos.get(&rule.target))
        {
            adjacency[p1].push(t);
            adjacency[p2].push(t);
        }
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; facts.len()];
    for start in 0..facts.len() {
        if state[start] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        state[start] = 1;
        while let Some(&mut (node, ref mut edge)) = stack.last_mut() {
            if *edge < adjacency[node].len() {
                let next = adjacency[node][*edge];
                *edge += 1;
                match state[next] {
                    0 => {
                        state[next] = 1;
                        stack.push((next, 0));
                    }
                    1 => return Some(facts[next].id.clone()),
                    _ => {}
                }
            } else {
                state[node] = 2;
                stack.pop();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_fact_builder() -> NetworkBuilder {
        let mut b = NetworkBuilder::new();
        b.add_fact(Fact::input("a")).unwrap();
        b.add_fact(Fact::input("b")).unwrap();
        b.add_fact(Fact::output("o")).unwrap();
        b
    }

    #[test]
    fn add_fact_to_empty_network() {
        let mut b = NetworkBuilder::new();
        b.add_fact(Fact::input("url_len")).unwrap();
        assert_eq!(b.facts.len(), 1);
    }

    #[test]
    fn duplicate_fact_id_rejected() {
        let mut b = NetworkBuilder::new();
        b.add_fact(Fact::input("a")).unwrap();
        let err = b.add_fact(Fact::input("a")).unwrap_err();
        assert_eq!(err, NetworkError::DuplicateId(FactId::from("a")));
    }

    #[test]
    fn second_output_fact_rejected() {
        let mut b = NetworkBuilder::new();
        b.add_fact(Fact::output("o1")).unwrap();
        let err = b.add_fact(Fact::output("o2")).unwrap_err();
        assert_eq!(err, NetworkError::SecondOutputFact(FactId::from("o1")));
    }

    #[test]
    fn balanced_rule_accepted() {
        let mut b = three_fact_builder();
        b.add_rule(Rule::new("r1", "a", "b", "o", 0.5, 0.5)).unwrap();
        let net = b.build().unwrap();
        assert_eq!(net.rule_count(), 1);
    }

    #[test]
    fn weight_sum_violation_rejected() {
        let mut b = three_fact_builder();
        let err = b.add_rule(Rule::new("r1", "a", "b", "o", 0.7, 0.7)).unwrap_err();
        assert!(matches!(err, NetworkError::WeightSumViolation { .. }));
    }

    #[test]
    fn weight_out_of_range_rejected() {
        let mut b = three_fact_builder();
        let err = b.add_rule(Rule::new("r1", "a", "b", "o", 1.2, -0.2)).unwrap_err();
        assert!(matches!(err, NetworkError::WeightOutOfRange { .. }));
    }

    #[test]
    fn cycle_rejected_on_three_node_fixture() {
        // a, b inputs feed c; a rule back from c into the chain would cycle.
        let mut b = NetworkBuilder::new();
        b.add_fact(Fact::input("b")).unwrap();
        b.add_fact(Fact::intermediate("a")).unwrap();
        b.add_fact(Fact::intermediate("c")).unwrap();
        b.add_fact(Fact::input("x")).unwrap();
        b.add_fact(Fact::output("o")).unwrap();
        b.add_rule(Rule::new("r1", "a", "b", "c", 0.5, 0.5)).unwrap();
        // c -> a closes the loop a -> c -> a.
        let err = b.add_rule(Rule::new("r2", "c", "b", "a", 0.5, 0.5)).unwrap_err();
        assert_eq!(err, NetworkError::CycleIntroduced(RuleId::from("r2")));

        // Independent check: depth-first search from "a" over premise->target
        // edges reaches "a" again if the rejected rule were admitted.
        let rules = vec![
            Rule::new("r1", "a", "b", "c", 0.5, 0.5),
            Rule::new("r2", "c", "b", "a", 0.5, 0.5),
        ];
        let mut reach = vec![FactId::from("a")];
        let mut seen = BTreeSet::new();
        let mut cyclic = false;
        while let Some(f) = reach.pop() {
            if !seen.insert(f.clone()) {
                cyclic = true;
                break;
            }
            for r in &rules {
                if r.premise1 == f || r.premise2 == f {
                    reach.push(r.target.clone());
                }
            }
        }
        assert!(cyclic);
    }

    #[test]
    fn duplicate_target_rejected() {
        let mut b = three_fact_builder();
        b.add_fact(Fact::input("c")).unwrap();
        b.add_rule(Rule::new("r1", "a", "b", "o", 0.5, 0.5)).unwrap();
        let err = b.add_rule(Rule::new("r2", "a", "c", "o", 0.5, 0.5)).unwrap_err();
        assert!(matches!(err, NetworkError::DuplicateTarget { .. }));
    }

    #[test]
    fn target_must_not_be_input() {
        let mut b = three_fact_builder();
        b.add_fact(Fact::input("c")).unwrap();
        let err = b.add_rule(Rule::new("r1", "a", "b", "c", 0.5, 0.5)).unwrap_err();
        assert!(matches!(err, NetworkError::TargetIsInput { .. }));
    }

    #[test]
    fn validate_clean_on_well_formed_network() {
        let mut b = three_fact_builder();
        b.add_rule(Rule::new("r1", "a", "b", "o", 0.5, 0.5)).unwrap();
        let net = b.build().unwrap();
        let report = net.validate();
        assert!(report.is_clean(), "{report}");
    }

    #[test]
    fn validate_warns_on_orphan_input() {
        let mut b = three_fact_builder();
        b.add_fact(Fact::input("orphan")).unwrap();
        b.add_rule(Rule::new("r1", "a", "b", "o", 0.5, 0.5)).unwrap();
        let net = b.build().unwrap();
        let report = net.validate();
        assert!(report.is_valid());
        assert_eq!(
            report.warnings,
            vec![Finding::UnreachableInput { fact: FactId::from("orphan") }]
        );
    }

    #[test]
    fn topological_order_respects_dependencies() {
        let mut b = NetworkBuilder::new();
        for id in ["a", "b", "c"] {
            b.add_fact(Fact::input(id)).unwrap();
        }
        b.add_fact(Fact::intermediate("i")).unwrap();
        b.add_fact(Fact::output("o")).unwrap();
        b.add_rule(Rule::new("r2", "i", "c", "o", 0.25, 0.75)).unwrap();
        b.add_rule(Rule::new("r1", "a", "b", "i", 0.5, 0.5)).unwrap();
        let net = b.build().unwrap();
        assert_eq!(
            net.topological_order(),
            vec![RuleId::from("r1"), RuleId::from("r2")]
        );
    }

    #[test]
    fn topological_ties_break_by_rule_id() {
        let mut b = NetworkBuilder::new();
        for id in ["w", "x", "y", "z"] {
            b.add_fact(Fact::input(id)).unwrap();
        }
        b.add_fact(Fact::intermediate("m1")).unwrap();
        b.add_fact(Fact::intermediate("m2")).unwrap();
        b.add_fact(Fact::output("o")).unwrap();
        b.add_rule(Rule::new("r_b", "w", "x", "m1", 0.5, 0.5)).unwrap();
        b.add_rule(Rule::new("r_a", "y", "z", "m2", 0.5, 0.5)).unwrap();
        b.add_rule(Rule::new("r_c", "m1", "m2", "o", 0.5, 0.5)).unwrap();
        let net = b.build().unwrap();
        assert_eq!(
            net.topological_order(),
            vec![RuleId::from("r_a"), RuleId::from("r_b"), RuleId::from("r_c")]
        );
    }
}
