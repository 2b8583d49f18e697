//! Association-rule mining over transactions built from exchanged cause
//! vectors.
//!
//! A transaction is the ordered top-two guess of one vehicle, optionally
//! labeled with the scenario ground truth. Since every transaction holds
//! exactly two items, Apriori stops at level two: frequent singletons
//! F1 and frequent pairs F2. Rule generation emits singleton-consequent
//! rules from F2; the supervised variant additionally mines correction
//! rules of the form {guess, label} -> {label} from transactions whose
//! first guess missed the label.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::evidence::{Cause, CauseSet, CauseVector, ALL_CAUSES};

/// One vehicle's ordered top-two causes, with an optional ground-truth label.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transaction {
    first: Cause,
    second: Cause,
    label: Option<Cause>,
}

impl Transaction {
    pub fn new(first: Cause, second: Cause, label: Option<Cause>) -> Result<Self, RulesError> {
        if first == second {
            return Err(RulesError::DegenerateTransaction(first));
        }
        Ok(Transaction {
            first,
            second,
            label,
        })
    }

    pub fn first(&self) -> Cause {
        self.first
    }

    pub fn second(&self) -> Cause {
        self.second
    }

    pub fn label(&self) -> Option<Cause> {
        self.label
    }

    /// The unordered item set {first, second}.
    pub fn items(&self) -> CauseSet {
        CauseSet::singleton(self.first).with(self.second)
    }
}

impl fmt::Display for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.first.code(), self.second.code())?;
        if let Some(label) = self.label {
            write!(f, "|{}", label.code())?;
        }
        Ok(())
    }
}

/// Builds a transaction from a classifier probability vector: the top two
/// causes in order, ties broken by canonical index.
pub fn transaction_from_vector(c: &CauseVector, label: Option<Cause>) -> Transaction {
    let (first, second) = c.top_two();
    Transaction {
        first,
        second,
        label,
    }
}

/// A set of transactions to mine.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    transactions: Vec<Transaction>,
}

impl Dataset {
    pub fn new(transactions: Vec<Transaction>) -> Dataset {
        Dataset { transactions }
    }

    pub fn push(&mut self, t: Transaction) {
        self.transactions.push(t);
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    /// Reads the plain-text dataset format: one transaction per line,
    /// comma-separated cause codes with an optional `|label` suffix,
    /// e.g. `SE,We|SE`. Blank lines and `#` comments are skipped.
    pub fn read<R: Read>(reader: R) -> Result<Dataset, RulesError> {
        let mut transactions = Vec::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| RulesError::DatasetParse {
                line: lineno,
                msg: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (items, label) = match line.split_once('|') {
                Some((items, label)) => {
                    let label =
                        label
                            .trim()
                            .parse::<Cause>()
                            .map_err(|e| RulesError::DatasetParse {
                                line: lineno,
                                msg: e.to_string(),
                            })?;
                    (items, Some(label))
                }
                None => (line, None),
            };
            let mut causes = items.split(',').map(|s| s.trim().parse::<Cause>());
            let first = causes
                .next()
                .transpose()
                .ok()
                .flatten()
                .ok_or_else(|| RulesError::DatasetParse {
                    line: lineno,
                    msg: format!("expected two cause codes, got `{items}`"),
                })?;
            let second = causes
                .next()
                .transpose()
                .ok()
                .flatten()
                .ok_or_else(|| RulesError::DatasetParse {
                    line: lineno,
                    msg: format!("expected two cause codes, got `{items}`"),
                })?;
            if causes.next().is_some() {
                return Err(RulesError::DatasetParse {
                    line: lineno,
                    msg: format!("more than two items in `{items}`"),
                });
            }
            let t = Transaction::new(first, second, label).map_err(|e| {
                RulesError::DatasetParse {
                    line: lineno,
                    msg: e.to_string(),
                }
            })?;
            transactions.push(t);
        }
        Ok(Dataset { transactions })
    }

    pub fn read_path<P: AsRef<Path>>(path: P) -> Result<Dataset, RulesError> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| RulesError::Io {
            path: path.as_ref().display().to_string(),
            msg: e.to_string(),
        })?;
        Dataset::read(file)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), RulesError> {
        for t in &self.transactions {
            writeln!(w, "{t}").map_err(|e| RulesError::Io {
                path: String::new(),
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }
}

/// Support and confidence thresholds for mining.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MiningConfig {
    pub minsup: f64,
    pub mincon: f64,
}

impl MiningConfig {
    pub fn new(minsup: f64, mincon: f64) -> Result<MiningConfig, RulesError> {
        if !(minsup > 0.0 && minsup <= 1.0) {
            return Err(RulesError::InvalidConfig(format!(
                "minsup {minsup} out of (0,1]"
            )));
        }
        if !(mincon > 0.0 && mincon <= 1.0) {
            return Err(RulesError::InvalidConfig(format!(
                "mincon {mincon} out of (0,1]"
            )));
        }
        Ok(MiningConfig { minsup, mincon })
    }
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            minsup: 0.25,
            mincon: 0.8,
        }
    }
}

/// An if/then rule with its measured support and confidence.
///
/// Plain association rules have disjoint sides. Correction rules mined
/// from labeled data take the form {guess, label} -> {label}: the
/// consequent is the label and repeats inside the antecedent, which is
/// how they are told apart downstream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssociationRule {
    pub antecedent: CauseSet,
    pub consequent: CauseSet,
    pub support: f64,
    pub confidence: f64,
}

impl AssociationRule {
    /// A plain rule; antecedent and consequent must be disjoint and non-empty.
    pub fn association(
        antecedent: CauseSet,
        consequent: CauseSet,
        support: f64,
        confidence: f64,
    ) -> Result<AssociationRule, RulesError> {
        if antecedent.is_empty() || consequent.is_empty() {
            return Err(RulesError::EmptyItemset);
        }
        if !antecedent.is_disjoint(consequent) {
            return Err(RulesError::OverlappingRuleSides {
                antecedent,
                consequent,
            });
        }
        Ok(AssociationRule {
            antecedent,
            consequent,
            support,
            confidence,
        })
    }

    /// A supervised correction rule {guess, label} -> {label}.
    pub fn correction(
        guess: Cause,
        label: Cause,
        support: f64,
        confidence: f64,
    ) -> Result<AssociationRule, RulesError> {
        if guess == label {
            return Err(RulesError::DegenerateTransaction(guess));
        }
        Ok(AssociationRule {
            antecedent: CauseSet::singleton(guess).with(label),
            consequent: CauseSet::singleton(label),
            support,
            confidence,
        })
    }

    /// True for the {guess, label} -> {label} shape.
    pub fn is_correction(&self) -> bool {
        self.consequent.len() == 1
            && self.antecedent.len() == 2
            && self.consequent.is_subset_of(self.antecedent)
    }

    /// For a correction rule, the wrongful guess (the antecedent member
    /// outside the consequent).
    pub fn correction_guess(&self) -> Option<Cause> {
        if !self.is_correction() {
            return None;
        }
        self.antecedent
            .iter()
            .find(|c| !self.consequent.contains(*c))
    }

    /// For a correction rule, the label the decision should flip to.
    pub fn correction_label(&self) -> Option<Cause> {
        if !self.is_correction() {
            return None;
        }
        self.consequent.iter().next()
    }
}

impl fmt::Display for AssociationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} -> {} (sup {:.3}, conf {:.3})",
            self.antecedent, self.consequent, self.support, self.confidence
        )
    }
}

/// Mined rules in priority order, with the provenance that produced them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RuleBook {
    rules: Vec<AssociationRule>,
    pub provenance: String,
}

impl RuleBook {
    pub fn new(mut rules: Vec<AssociationRule>, provenance: String) -> RuleBook {
        sort_rules(&mut rules);
        RuleBook { rules, provenance }
    }

    pub fn empty() -> RuleBook {
        RuleBook::default()
    }

    pub fn rules(&self) -> &[AssociationRule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Writes the CSV export: `antecedent,consequent,support,confidence`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), RulesError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["antecedent", "consequent", "support", "confidence"])
            .map_err(csv_err)?;
        for r in &self.rules {
            out.write_record([
                r.antecedent.to_string(),
                r.consequent.to_string(),
                r.support.to_string(),
                r.confidence.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush().map_err(|e| RulesError::Io {
            path: String::new(),
            msg: e.to_string(),
        })
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<RuleBook, RulesError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rules = Vec::new();
        for (idx, record) in rdr.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let parse = |field: usize, what: &str| -> Result<&str, RulesError> {
                record.get(field).ok_or_else(|| RulesError::DatasetParse {
                    line: idx + 2,
                    msg: format!("missing {what} column"),
                })
            };
            let antecedent: CauseSet =
                parse(0, "antecedent")?
                    .parse()
                    .map_err(|e: crate::evidence::EvidenceError| RulesError::DatasetParse {
                        line: idx + 2,
                        msg: e.to_string(),
                    })?;
            let consequent: CauseSet =
                parse(1, "consequent")?
                    .parse()
                    .map_err(|e: crate::evidence::EvidenceError| RulesError::DatasetParse {
                        line: idx + 2,
                        msg: e.to_string(),
                    })?;
            let support: f64 = parse(2, "support")?.parse().map_err(|_| {
                RulesError::DatasetParse {
                    line: idx + 2,
                    msg: "bad support".to_string(),
                }
            })?;
            let confidence: f64 = parse(3, "confidence")?.parse().map_err(|_| {
                RulesError::DatasetParse {
                    line: idx + 2,
                    msg: "bad confidence".to_string(),
                }
            })?;
            rules.push(AssociationRule {
                antecedent,
                consequent,
                support,
                confidence,
            });
        }
        Ok(RuleBook::new(rules, "csv".to_string()))
    }

    pub fn read_csv_path<P: AsRef<Path>>(path: P) -> Result<RuleBook, RulesError> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| RulesError::Io {
            path: path.as_ref().display().to_string(),
            msg: e.to_string(),
        })?;
        RuleBook::read_csv(file)
    }
}

fn csv_err(e: csv::Error) -> RulesError {
    RulesError::Io {
        path: String::new(),
        msg: e.to_string(),
    }
}

/// Deterministic rule priority: confidence desc, support desc, then mask order.
fn sort_rules(rules: &mut [AssociationRule]) {
    rules.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap()
            .then(b.support.partial_cmp(&a.support).unwrap())
            .then(a.antecedent.bits().cmp(&b.antecedent.bits()))
            .then(a.consequent.bits().cmp(&b.consequent.bits()))
    });
}

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("transaction items must differ, got {0} twice")]
    DegenerateTransaction(Cause),
    #[error("itemset must be non-empty")]
    EmptyItemset,
    #[error("rule sides overlap: {antecedent} and {consequent}")]
    OverlappingRuleSides {
        antecedent: CauseSet,
        consequent: CauseSet,
    },
    #[error("undefined confidence: antecedent {0} has zero support")]
    UndefinedConfidence(CauseSet),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("transaction {index} has no label; supervised mining needs labels")]
    UnlabeledTransaction { index: usize },
    #[error("dataset parse error at line {line}: {msg}")]
    DatasetParse { line: usize, msg: String },
    #[error("invalid mining config: {0}")]
    InvalidConfig(String),
    #[error("io error {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Support count: transactions whose item set contains `x`. Labels are
/// not part of the item set here.
pub fn itemset_support(d: &Dataset, x: CauseSet) -> Result<usize, RulesError> {
    if x.is_empty() {
        return Err(RulesError::EmptyItemset);
    }
    Ok(d.transactions
        .iter()
        .filter(|t| x.is_subset_of(t.items()))
        .count())
}

/// Support of the rule X -> Y: sigma(X union Y) / N.
pub fn rule_support(d: &Dataset, x: CauseSet, y: CauseSet) -> Result<f64, RulesError> {
    if x.is_empty() || y.is_empty() {
        return Err(RulesError::EmptyItemset);
    }
    if !x.is_disjoint(y) {
        return Err(RulesError::OverlappingRuleSides {
            antecedent: x,
            consequent: y,
        });
    }
    if d.is_empty() {
        return Err(RulesError::EmptyDataset);
    }
    Ok(itemset_support(d, x.union(y))? as f64 / d.len() as f64)
}

/// Confidence of the rule X -> Y: sigma(X union Y) / sigma(X).
pub fn rule_confidence(d: &Dataset, x: CauseSet, y: CauseSet) -> Result<f64, RulesError> {
    if x.is_empty() || y.is_empty() {
        return Err(RulesError::EmptyItemset);
    }
    if !x.is_disjoint(y) {
        return Err(RulesError::OverlappingRuleSides {
            antecedent: x,
            consequent: y,
        });
    }
    let denom = itemset_support(d, x)?;
    if denom == 0 {
        return Err(RulesError::UndefinedConfidence(x));
    }
    Ok(itemset_support(d, x.union(y))? as f64 / denom as f64)
}

/// Frequent itemsets by level. Transactions carry exactly two items, so
/// the levels stop at pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrequentItemsets {
    /// Frequent 1-itemsets with their support counts, in mask order.
    pub f1: Vec<(CauseSet, usize)>,
    /// Frequent 2-itemsets with their support counts, in mask order.
    pub f2: Vec<(CauseSet, usize)>,
}

impl FrequentItemsets {
    pub fn is_empty(&self) -> bool {
        self.f1.is_empty() && self.f2.is_empty()
    }
}

/// Level-wise frequent itemset generation. F1 filters singletons by
/// `count >= N * minsup`; F2 candidates come only from F1 members, since
/// supersets of infrequent itemsets cannot be frequent.
pub fn apriori_frequent(d: &Dataset, minsup: f64) -> Result<FrequentItemsets, RulesError> {
    if d.is_empty() {
        return Err(RulesError::EmptyDataset);
    }
    if !(minsup > 0.0 && minsup <= 1.0) {
        return Err(RulesError::InvalidConfig(format!(
            "minsup {minsup} out of (0,1]"
        )));
    }
    let threshold = d.len() as f64 * minsup;
    let mut f1 = Vec::new();
    for c in ALL_CAUSES {
        let set = CauseSet::singleton(c);
        let count = itemset_support(d, set)?;
        if count as f64 >= threshold {
            f1.push((set, count));
        }
    }
    let mut f2 = Vec::new();
    for i in 0..f1.len() {
        for j in (i + 1)..f1.len() {
            let pair = f1[i].0.union(f1[j].0);
            let count = itemset_support(d, pair)?;
            if count as f64 >= threshold {
                f2.push((pair, count));
            }
        }
    }
    f2.sort_by_key(|(s, _)| s.bits());
    Ok(FrequentItemsets { f1, f2 })
}

/// The single most supported 1-itemset, counting only first-guess items —
/// the voting procedure realized as mining. Ties break by canonical index.
pub fn max_one_itemset(d: &Dataset) -> Result<CauseSet, RulesError> {
    if d.is_empty() {
        return Err(RulesError::EmptyDataset);
    }
    let mut counts = [0usize; 5];
    for t in &d.transactions {
        counts[t.first.index()] += 1;
    }
    let winner = ALL_CAUSES
        .into_iter()
        .max_by_key(|c| counts[c.index()])
        .unwrap();
    // max_by_key returns the last maximum; scan forward for the first
    let winner = ALL_CAUSES
        .into_iter()
        .find(|c| counts[c.index()] == counts[winner.index()])
        .unwrap();
    Ok(CauseSet::singleton(winner))
}

/// Confidence-pruned rule generation from frequent pairs: for each
/// frequent {a,b}, emits {a}->{b} and {b}->{a} when confidence clears
/// `mincon`. May return an empty book.
pub fn generate_rules(frequent: &FrequentItemsets, d: &Dataset, mincon: f64) -> RuleBook {
    let mut rules = Vec::new();
    for &(pair, count) in &frequent.f2 {
        let support = count as f64 / d.len() as f64;
        let members: Vec<Cause> = pair.iter().collect();
        for (a, b) in [(members[0], members[1]), (members[1], members[0])] {
            let x = CauseSet::singleton(a);
            let y = CauseSet::singleton(b);
            let confidence = match rule_confidence(d, x, y) {
                Ok(c) => c,
                Err(_) => continue,
            };
            if confidence >= mincon {
                rules.push(AssociationRule {
                    antecedent: x,
                    consequent: y,
                    support,
                    confidence,
                });
            }
        }
    }
    RuleBook::new(rules, format!("generate_rules mincon={mincon}"))
}

/// Supervised mining over a fully labeled dataset.
///
/// Correction rules come from the derived (first-guess, label) pairs of
/// transactions whose first guess missed the label: for each observed
/// ordered pattern (g, l) with g != l, the rule {g, l} -> {l} gets
/// support = pattern count / N and confidence = pattern count / count of
/// either orientation of the {g, l} confusion. The result is merged with
/// the ordinary rules mined from the unlabeled item pairs.
pub fn mine_supervised(d: &Dataset, cfg: &MiningConfig) -> Result<RuleBook, RulesError> {
    if d.is_empty() {
        return Err(RulesError::EmptyDataset);
    }
    if let Some(index) = d.transactions.iter().position(|t| t.label.is_none()) {
        return Err(RulesError::UnlabeledTransaction { index });
    }
    let n = d.len() as f64;

    // ordered misprediction patterns (first guess, label)
    let mut pattern_counts: BTreeMap<(Cause, Cause), usize> = BTreeMap::new();
    for t in &d.transactions {
        let label = t.label.unwrap();
        if t.first != label {
            *pattern_counts.entry((t.first, label)).or_insert(0) += 1;
        }
    }

    let mut rules = Vec::new();
    for (&(guess, label), &count) in &pattern_counts {
        let either = count + pattern_counts.get(&(label, guess)).copied().unwrap_or(0);
        let support = count as f64 / n;
        let confidence = count as f64 / either as f64;
        if support >= cfg.minsup && confidence >= cfg.mincon {
            rules.push(AssociationRule::correction(
                guess, label, support, confidence,
            )?);
        }
    }

    let frequent = apriori_frequent(d, cfg.minsup)?;
    rules.extend_from_slice(generate_rules(&frequent, d, cfg.mincon).rules());
    Ok(RuleBook::new(
        rules,
        format!(
            "mine_supervised N={} minsup={} mincon={}",
            d.len(),
            cfg.minsup,
            cfg.mincon
        ),
    ))
}
