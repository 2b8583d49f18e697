//! Belief-function core over the fixed five-cause frame.
//!
//! The frame of discernment is the set of five congestion causes
//! {Incident, Workzone, Weather, SpecialEvent, Recurrent}. A mass
//! function assigns belief to subsets of the frame; the subsets are
//! encoded as 5-bit masks so the whole power set fits in `0..32`.
//! Combination keeps the conjunctive rule (conflict stays on the empty
//! set) and Dempster's rule (conflict renormalized away) separate; the
//! pignistic transform turns a mass function back into a probability
//! vector for decision making.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Tolerance for "sums to one" checks on masses and probability vectors.
pub const MASS_TOL: f64 = 1e-9;

/// The five congestion causes, in canonical index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cause {
    Incident,
    Workzone,
    Weather,
    SpecialEvent,
    Recurrent,
}

/// All causes in canonical order; index in this array == canonical index.
pub const ALL_CAUSES: [Cause; 5] = [
    Cause::Incident,
    Cause::Workzone,
    Cause::Weather,
    Cause::SpecialEvent,
    Cause::Recurrent,
];

impl Cause {
    /// Canonical index, 0..=4.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Cause> {
        ALL_CAUSES.get(i).copied()
    }

    /// Short code used in datasets, rule books and log payloads.
    pub fn code(self) -> &'static str {
        match self {
            Cause::Incident => "I",
            Cause::Workzone => "Wo",
            Cause::Weather => "We",
            Cause::SpecialEvent => "SE",
            Cause::Recurrent => "Re",
        }
    }
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Cause {
    type Err = EvidenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "I" => Ok(Cause::Incident),
            "Wo" => Ok(Cause::Workzone),
            "We" => Ok(Cause::Weather),
            "SE" => Ok(Cause::SpecialEvent),
            "Re" => Ok(Cause::Recurrent),
            other => Err(EvidenceError::UnknownCause(other.to_string())),
        }
    }
}

/// A subset of the five-cause frame, encoded as a 5-bit mask.
///
/// Bit `i` set means the cause with canonical index `i` is a member.
/// `0b00000` is the empty set, `0b11111` the whole frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CauseSet(u8);

impl CauseSet {
    pub const EMPTY: CauseSet = CauseSet(0);
    pub const OMEGA: CauseSet = CauseSet(0b11111);
    /// Number of distinct subsets of the frame.
    pub const COUNT: usize = 32;

    pub fn singleton(c: Cause) -> CauseSet {
        CauseSet(1 << c.index())
    }

    /// Builds a set from raw bits; bits above the frame width are rejected.
    pub fn from_bits(bits: u8) -> Option<CauseSet> {
        (bits < 32).then_some(CauseSet(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn from_causes<I: IntoIterator<Item = Cause>>(causes: I) -> CauseSet {
        let mut s = CauseSet::EMPTY;
        for c in causes {
            s = s.with(c);
        }
        s
    }

    pub fn with(self, c: Cause) -> CauseSet {
        CauseSet(self.0 | (1 << c.index()))
    }

    pub fn contains(self, c: Cause) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    pub fn intersect(self, other: CauseSet) -> CauseSet {
        CauseSet(self.0 & other.0)
    }

    pub fn union(self, other: CauseSet) -> CauseSet {
        CauseSet(self.0 | other.0)
    }

    pub fn is_subset_of(self, other: CauseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: CauseSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Cardinality |A|.
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Members in canonical index order.
    pub fn iter(self) -> impl Iterator<Item = Cause> {
        ALL_CAUSES.into_iter().filter(move |c| self.contains(*c))
    }

    /// All 32 subsets of the frame in mask order.
    pub fn all_subsets() -> impl Iterator<Item = CauseSet> {
        (0u8..32).map(CauseSet)
    }
}

impl fmt::Display for CauseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("EMPTY");
        }
        if *self == CauseSet::OMEGA {
            return f.write_str("OMEGA");
        }
        let mut first = true;
        for c in self.iter() {
            if !first {
                f.write_str(",")?;
            }
            f.write_str(c.code())?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for CauseSet {
    type Err = EvidenceError;

    /// Parses `"We,Re"`, `"OMEGA"` or `"EMPTY"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "OMEGA" => Ok(CauseSet::OMEGA),
            "EMPTY" => Ok(CauseSet::EMPTY),
            _ => {
                let mut set = CauseSet::EMPTY;
                for part in s.split(',') {
                    set = set.with(part.trim().parse::<Cause>()?);
                }
                Ok(set)
            }
        }
    }
}

/// A probability vector over the five causes, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CauseVector([f64; 5]);

impl CauseVector {
    /// Validates entries in [0,1] and a total of 1 within [`MASS_TOL`].
    pub fn new(p: [f64; 5]) -> Result<CauseVector, EvidenceError> {
        for (i, &v) in p.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(EvidenceError::InvalidVector(format!(
                    "probability {v} for {} out of [0,1]",
                    ALL_CAUSES[i]
                )));
            }
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(EvidenceError::InvalidVector(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(CauseVector(p))
    }

    pub fn uniform() -> CauseVector {
        CauseVector([0.2; 5])
    }

    pub fn get(&self, c: Cause) -> f64 {
        self.0[c.index()]
    }

    pub fn as_array(&self) -> [f64; 5] {
        self.0
    }

    /// Highest-probability cause; ties break toward the lower canonical index.
    pub fn argmax(&self) -> Cause {
        self.top_two().0
    }

    /// The two highest-probability causes, ties broken by canonical index.
    pub fn top_two(&self) -> (Cause, Cause) {
        let mut order: Vec<usize> = (0..5).collect();
        // stable sort keeps canonical order among equal probabilities
        order.sort_by(|&a, &b| self.0[b].partial_cmp(&self.0[a]).unwrap());
        (ALL_CAUSES[order[0]], ALL_CAUSES[order[1]])
    }
}

impl fmt::Display for CauseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{} {} {} {} {}]",
            self.0[0], self.0[1], self.0[2], self.0[3], self.0[4]
        )
    }
}

/// A belief mass assignment over subsets of the frame.
///
/// Only focal elements (subsets with strictly positive mass) are stored;
/// [`MassFunction::mass`] returns 0 for everything else. Validity per the
/// closure condition — all masses in [0,1], total 1 — is checked by
/// [`validate_mass`], not enforced on construction, so partially built
/// masses can be inspected in error paths.
#[derive(Clone, Debug, PartialEq)]
pub struct MassFunction {
    masses: BTreeMap<CauseSet, f64>,
}

impl MassFunction {
    pub fn new() -> MassFunction {
        MassFunction {
            masses: BTreeMap::new(),
        }
    }

    /// Total ignorance: all mass on the frame.
    pub fn vacuous() -> MassFunction {
        let mut m = MassFunction::new();
        m.set_mass(CauseSet::OMEGA, 1.0);
        m
    }

    pub fn from_pairs<I: IntoIterator<Item = (CauseSet, f64)>>(pairs: I) -> MassFunction {
        let mut m = MassFunction::new();
        for (set, mass) in pairs {
            m.set_mass(set, mass);
        }
        m
    }

    /// Sets the mass of one subset; zero removes it from the focal set.
    pub fn set_mass(&mut self, set: CauseSet, mass: f64) {
        if mass == 0.0 {
            self.masses.remove(&set);
        } else {
            self.masses.insert(set, mass);
        }
    }

    pub fn mass(&self, set: CauseSet) -> f64 {
        self.masses.get(&set).copied().unwrap_or(0.0)
    }

    /// Focal elements with their masses, in mask order.
    pub fn focal(&self) -> impl Iterator<Item = (CauseSet, f64)> + '_ {
        self.masses.iter().map(|(&s, &m)| (s, m))
    }

    pub fn total(&self) -> f64 {
        self.masses.values().sum()
    }

    /// Rescales so the total is exactly 1; errors when the total is zero.
    pub fn normalized(&self) -> Result<MassFunction, EvidenceError> {
        let total = self.total();
        if total <= 0.0 {
            return Err(EvidenceError::InvalidMass {
                which: "mass".to_string(),
                violation: MassViolation::TotalMismatch { total },
            });
        }
        Ok(MassFunction::from_pairs(
            self.focal().map(|(s, m)| (s, m / total)),
        ))
    }
}

impl Default for MassFunction {
    fn default() -> Self {
        MassFunction::new()
    }
}

impl fmt::Display for MassFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (set, mass) in self.focal() {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{set}:{mass}")?;
            first = false;
        }
        Ok(())
    }
}

/// Which of the validity conditions a mass function breaks.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum MassViolation {
    #[error("mass {mass} on {set} out of [0,1]")]
    MassOutOfRange { set: CauseSet, mass: f64 },
    #[error("total mass {total} != 1")]
    TotalMismatch { total: f64 },
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvidenceError {
    #[error("invalid mass function {which}: {violation}")]
    InvalidMass {
        which: String,
        violation: MassViolation,
    },
    #[error("invalid cause vector: {0}")]
    InvalidVector(String),
    #[error("undefined combination, K=1 (total conflict after {prefix_len} masses)")]
    TotalConflict { prefix_len: usize },
    #[error("cannot combine an empty list of masses")]
    EmptyCombination,
    #[error("no surviving belief: all mass on the empty set")]
    NoSurvivingBelief,
    #[error("unknown cause code `{0}`")]
    UnknownCause(String),
}

/// Checks the closure condition: every mass in [0,1] and a total of 1,
/// both within [`MASS_TOL`]. Returns the violated condition, never
/// panics.
pub fn validate_mass(m: &MassFunction) -> Result<(), MassViolation> {
    for (set, mass) in m.focal() {
        if !(-MASS_TOL..=1.0 + MASS_TOL).contains(&mass) || !mass.is_finite() {
            return Err(MassViolation::MassOutOfRange { set, mass });
        }
    }
    let total = m.total();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(MassViolation::TotalMismatch { total });
    }
    Ok(())
}

fn require_valid(m: &MassFunction, which: &str) -> Result<(), EvidenceError> {
    validate_mass(m).map_err(|violation| EvidenceError::InvalidMass {
        which: which.to_string(),
        violation,
    })
}

/// Which pairwise combination rule a fold uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CombinationRule {
    /// Unnormalized; conflict mass stays on the empty set.
    Conjunctive,
    /// Conjunctive followed by renormalization over 1 - K.
    Dempster,
}

impl fmt::Display for CombinationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CombinationRule::Conjunctive => f.write_str("conjunctive"),
            CombinationRule::Dempster => f.write_str("dempster"),
        }
    }
}

impl FromStr for CombinationRule {
    type Err = EvidenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "conjunctive" => Ok(CombinationRule::Conjunctive),
            "dempster" => Ok(CombinationRule::Dempster),
            other => Err(EvidenceError::UnknownCause(format!(
                "unknown combination rule `{other}`"
            ))),
        }
    }
}

fn conjunctive_unchecked(m1: &MassFunction, m2: &MassFunction) -> MassFunction {
    let mut out: BTreeMap<CauseSet, f64> = BTreeMap::new();
    for (a, ma) in m1.focal() {
        for (b, mb) in m2.focal() {
            *out.entry(a.intersect(b)).or_insert(0.0) += ma * mb;
        }
    }
    out.retain(|_, v| *v != 0.0);
    MassFunction { masses: out }
}

/// Conjunctive rule of combination: mass products land on focal-element
/// intersections, including the empty set, with no renormalization.
pub fn conjunctive_combine(
    m1: &MassFunction,
    m2: &MassFunction,
) -> Result<MassFunction, EvidenceError> {
    require_valid(m1, "m1")?;
    require_valid(m2, "m2")?;
    Ok(conjunctive_unchecked(m1, m2))
}

/// The amount of conflict K between two sources: total product mass
/// whose focal intersections are empty.
pub fn conflict(m1: &MassFunction, m2: &MassFunction) -> Result<f64, EvidenceError> {
    require_valid(m1, "m1")?;
    require_valid(m2, "m2")?;
    let mut k = 0.0;
    for (a, ma) in m1.focal() {
        for (b, mb) in m2.focal() {
            if a.intersect(b).is_empty() {
                k += ma * mb;
            }
        }
    }
    Ok(k)
}

/// Dempster's rule: the conjunctive combination with the conflict mass
/// renormalized away. Undefined (errors) under total conflict.
pub fn dempster_combine(
    m1: &MassFunction,
    m2: &MassFunction,
) -> Result<MassFunction, EvidenceError> {
    require_valid(m1, "m1")?;
    require_valid(m2, "m2")?;
    dempster_unchecked(m1, m2, 2)
}

fn dempster_unchecked(
    m1: &MassFunction,
    m2: &MassFunction,
    prefix_len: usize,
) -> Result<MassFunction, EvidenceError> {
    let joint = conjunctive_unchecked(m1, m2);
    let k = joint.mass(CauseSet::EMPTY);
    if k >= 1.0 - MASS_TOL {
        return Err(EvidenceError::TotalConflict { prefix_len });
    }
    let scale = 1.0 / (1.0 - k);
    Ok(MassFunction::from_pairs(
        joint
            .focal()
            .filter(|(s, _)| !s.is_empty())
            .map(|(s, m)| (s, m * scale)),
    ))
}

/// Left fold of the pairwise rule over a non-empty list of masses.
///
/// Both rules are commutative and associative, so the result is
/// order-independent up to float round-off. For Dempster, a totally
/// conflicting prefix is reported with its length.
pub fn combine_all(
    masses: &[MassFunction],
    rule: CombinationRule,
) -> Result<MassFunction, EvidenceError> {
    if masses.is_empty() {
        return Err(EvidenceError::EmptyCombination);
    }
    for (i, m) in masses.iter().enumerate() {
        require_valid(m, &format!("masses[{i}]"))?;
    }
    let mut acc = masses[0].clone();
    for (i, m) in masses.iter().enumerate().skip(1) {
        acc = match rule {
            CombinationRule::Conjunctive => conjunctive_unchecked(&acc, m),
            CombinationRule::Dempster => dempster_unchecked(&acc, m, i + 1)?,
        };
    }
    Ok(acc)
}

/// Pignistic transform BetP: splits each focal element's mass equally
/// among its members, after discarding the conflict mass.
pub fn pignistic(m: &MassFunction) -> Result<CauseVector, EvidenceError> {
    require_valid(m, "m")?;
    let empty = m.mass(CauseSet::EMPTY);
    let denom = 1.0 - empty;
    if denom <= MASS_TOL {
        return Err(EvidenceError::NoSurvivingBelief);
    }
    let mut p = [0.0; 5];
    for (set, mass) in m.focal() {
        if set.is_empty() {
            continue;
        }
        let share = mass / (set.len() as f64 * denom);
        for c in set.iter() {
            p[c.index()] += share;
        }
    }
    // kill residual round-off so the result is a valid vector
    let total: f64 = p.iter().sum();
    for v in &mut p {
        *v /= total;
    }
    CauseVector::new(p)
}

/// Builds a mass function from a classifier probability vector.
///
/// Three focal elements: the top cause as a singleton, the two-item
/// subset of the top two causes, and the frame. The top-two
/// probabilities are renormalized to share `1 - ignorance`; `ignorance`
/// goes to the frame. Zero-mass elements are dropped.
pub fn mass_from_cause_vector(
    c: &CauseVector,
    ignorance: f64,
) -> Result<MassFunction, EvidenceError> {
    if !(0.0..1.0).contains(&ignorance) {
        return Err(EvidenceError::InvalidVector(format!(
            "ignorance {ignorance} out of [0,1)"
        )));
    }
    let (first, second) = c.top_two();
    let p1 = c.get(first);
    let p2 = c.get(second);
    // p1 >= 1/5 for any valid vector, so the pair total is positive
    let pair = p1 + p2;
    let mut m = MassFunction::new();
    m.set_mass(CauseSet::singleton(first), (1.0 - ignorance) * p1 / pair);
    m.set_mass(
        CauseSet::singleton(first).with(second),
        (1.0 - ignorance) * p2 / pair,
    );
    m.set_mass(CauseSet::OMEGA, ignorance);
    Ok(m)
}
