use std::collections::BTreeSet;
use std::fmt;

use crate::group::Scalar;
use crate::primitives::keyed_shuffle;

use super::EabehpError;

/// Per-attribute requirement in an access policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Trit {
    Required,
    Irrelevant,
    Unrequired,
}

impl Trit {
    pub fn as_i8(self) -> i8 {
        match self {
            Trit::Required => 1,
            Trit::Irrelevant => 0,
            Trit::Unrequired => -1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            1 => Some(Trit::Required),
            0 => Some(Trit::Irrelevant),
            -1 => Some(Trit::Unrequired),
            _ => None,
        }
    }

    fn symbol(self) -> char {
        match self {
            Trit::Required => '+',
            Trit::Irrelevant => '0',
            Trit::Unrequired => '-',
        }
    }
}

/// Access policy over the `N` system attributes.
///
/// Written as a string of `+` (required), `0` (irrelevant) and `-`
/// (unrequired), position `i` describing attribute `i + 1`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Policy {
    trits: Vec<Trit>,
}

impl Policy {
    pub fn new(trits: Vec<Trit>) -> Result<Self, EabehpError> {
        if !trits.contains(&Trit::Required) {
            return Err(EabehpError::NoRequiredAttribute);
        }
        Ok(Policy { trits })
    }

    pub fn from_i8(values: &[i8]) -> Result<Self, EabehpError> {
        let trits = values
            .iter()
            .map(|v| Trit::from_i8(*v).ok_or(EabehpError::PolicySyntax(format!("trit {v}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(trits)
    }

    pub fn parse(s: &str) -> Result<Self, EabehpError> {
        let trits = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '+' | '1' => Ok(Trit::Required),
                '0' => Ok(Trit::Irrelevant),
                '-' => Ok(Trit::Unrequired),
                other => Err(EabehpError::PolicySyntax(format!("unexpected `{other}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(trits)
    }

    pub fn trits(&self) -> &[Trit] {
        &self.trits
    }

    pub fn len(&self) -> usize {
        self.trits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trits.is_empty()
    }

    /// Trit of attribute `i` (1-based).
    pub fn trit(&self, i: usize) -> Trit {
        self.trits[i - 1]
    }

    pub fn required(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices_of(Trit::Required)
    }

    pub fn unrequired(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices_of(Trit::Unrequired)
    }

    fn indices_of(&self, t: Trit) -> impl Iterator<Item = usize> + '_ {
        self.trits
            .iter()
            .enumerate()
            .filter(move |(_, x)| **x == t)
            .map(|(i, _)| i + 1)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.trits {
            write!(f, "{}", t.symbol())?;
        }
        Ok(())
    }
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Policy({self})")
    }
}

/// Set of 1-based attribute indices drawn from a universe of size `N`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AttributeSet {
    universe: usize,
    indices: BTreeSet<usize>,
}

impl AttributeSet {
    pub fn new(universe: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self, EabehpError> {
        let mut set = BTreeSet::new();
        for i in indices {
            if i == 0 || i > universe {
                return Err(EabehpError::AttributeRange { index: i, universe });
            }
            if !set.insert(i) {
                return Err(EabehpError::DuplicateAttribute(i));
            }
        }
        Ok(AttributeSet { universe, indices: set })
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    /// N-bit membership bitmap, attribute 1 in the most significant bit of byte 0.
    pub fn to_bitmap(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.universe.div_ceil(8)];
        for i in &self.indices {
            let bit = i - 1;
            out[bit / 8] |= 0x80 >> (bit % 8);
        }
        out
    }

    pub fn from_bitmap(universe: usize, bytes: &[u8]) -> Result<Self, EabehpError> {
        if bytes.len() != universe.div_ceil(8) {
            return Err(EabehpError::Encoding("attribute bitmap width".into()));
        }
        let mut indices = BTreeSet::new();
        for bit in 0..bytes.len() * 8 {
            if bytes[bit / 8] & (0x80 >> (bit % 8)) != 0 {
                if bit >= universe {
                    return Err(EabehpError::Encoding("bitmap padding bits set".into()));
                }
                indices.insert(bit + 1);
            }
        }
        Ok(AttributeSet { universe, indices })
    }
}

/// True iff `attrs` holds every required attribute and no unrequired one.
pub fn satisfies(policy: &Policy, attrs: &AttributeSet) -> bool {
    policy.required().all(|i| attrs.contains(i)) && !policy.unrequired().any(|i| attrs.contains(i))
}

/// `{SH^-1(i) : i in attrs}` under the shuffle keyed by `omega`.
pub fn inverse_permute_attrs(attrs: &AttributeSet, omega: &Scalar, n: usize) -> AttributeSet {
    let perm = keyed_shuffle(omega, n);
    AttributeSet {
        universe: n,
        indices: attrs.iter().map(|i| perm.inverse(i)).collect(),
    }
}
