//! Field labels and their variance.

use std::fmt;
use std::ops::Mul;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variance {
    Covariant,
    Contravariant,
}

impl Variance {
    pub fn flip(self) -> Variance {
        match self {
            Variance::Covariant => Variance::Contravariant,
            Variance::Contravariant => Variance::Covariant,
        }
    }

    pub fn is_covariant(self) -> bool {
        self == Variance::Covariant
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Variance::Covariant => "+",
            Variance::Contravariant => "-",
        }
    }
}

impl Mul for Variance {
    type Output = Variance;

    fn mul(self, rhs: Variance) -> Variance {
        if self == rhs {
            Variance::Covariant
        } else {
            Variance::Contravariant
        }
    }
}

impl fmt::Display for Variance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// A capability accessor on a type variable.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FieldLabel {
    In(String),
    Out(String),
    Load,
    Store,
    /// `sN@k`: an N-bit field at byte offset k.
    Field {
        bits: u32,
        offset: i64,
    },
}

impl FieldLabel {
    pub fn variance(&self) -> Variance {
        match self {
            FieldLabel::In(_) | FieldLabel::Store => Variance::Contravariant,
            FieldLabel::Out(_) | FieldLabel::Load | FieldLabel::Field { .. } => Variance::Covariant,
        }
    }

    pub fn field(bits: u32, offset: i64) -> FieldLabel {
        FieldLabel::Field { bits, offset }
    }

    pub fn is_field(&self) -> bool {
        matches!(self, FieldLabel::Field { .. })
    }

    pub fn is_pointer(&self) -> bool {
        matches!(self, FieldLabel::Load | FieldLabel::Store)
    }
}

pub fn variance_of_word<'a, I>(word: I) -> Variance
where
    I: IntoIterator<Item = &'a FieldLabel>,
{
    word.into_iter()
        .fold(Variance::Covariant, |acc, l| acc * l.variance())
}

impl fmt::Display for FieldLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldLabel::In(loc) if loc.is_empty() => f.write_str("in"),
            FieldLabel::In(loc) => write!(f, "in_{loc}"),
            FieldLabel::Out(loc) if loc.is_empty() => f.write_str("out"),
            FieldLabel::Out(loc) => write!(f, "out_{loc}"),
            FieldLabel::Load => f.write_str("load"),
            FieldLabel::Store => f.write_str("store"),
            FieldLabel::Field { bits, offset } => write!(f, "s{bits}@{offset}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label `{0}`")]
pub struct UnknownLabel(pub String);

fn valid_location(loc: &str) -> bool {
    loc.chars()
        .all(|c| c.is_alphanumeric() || c == '_' || c == '$' || c == ':')
}

impl FromStr for FieldLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || UnknownLabel(s.to_string());
        match s {
            "load" => return Ok(FieldLabel::Load),
            "store" => return Ok(FieldLabel::Store),
            "in" => return Ok(FieldLabel::In(String::new())),
            "out" => return Ok(FieldLabel::Out(String::new())),
            _ => {}
        }
        if let Some(loc) = s.strip_prefix("in_") {
            return if !loc.is_empty() && valid_location(loc) {
                Ok(FieldLabel::In(loc.to_string()))
            } else {
                Err(bad())
            };
        }
        if let Some(loc) = s.strip_prefix("out_") {
            return if !loc.is_empty() && valid_location(loc) {
                Ok(FieldLabel::Out(loc.to_string()))
            } else {
                Err(bad())
            };
        }
        let rest = s
            .strip_prefix('s')
            .or_else(|| s.strip_prefix('σ'))
            .ok_or_else(bad)?;
        let (bits, offset) = rest.split_once('@').ok_or_else(bad)?;
        let bits: u32 = bits.parse().map_err(|_| bad())?;
        let offset: i64 = offset.parse().map_err(|_| bad())?;
        if bits == 0 {
            return Err(bad());
        }
        Ok(FieldLabel::Field { bits, offset })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_variances() {
        assert_eq!(FieldLabel::Load.variance(), Variance::Covariant);
        assert_eq!(FieldLabel::Store.variance(), Variance::Contravariant);
        assert_eq!(
            FieldLabel::In("stack0".into()).variance(),
            Variance::Contravariant
        );
        assert_eq!(
            FieldLabel::Out("eax".into()).variance(),
            Variance::Covariant
        );
        assert_eq!(FieldLabel::field(32, 4).variance(), Variance::Covariant);
    }

    #[test]
    fn word_variance() {
        assert_eq!(variance_of_word(&[FieldLabel::Load]), Variance::Covariant);
        assert_eq!(variance_of_word(&[]), Variance::Covariant);
        assert_eq!(
            variance_of_word(&[FieldLabel::Store, FieldLabel::In("stack0".into())]),
            Variance::Covariant
        );
    }

    #[test]
    fn parse_labels() {
        assert_eq!("s32@4".parse(), Ok(FieldLabel::field(32, 4)));
        assert_eq!("σ8@-2".parse(), Ok(FieldLabel::field(8, -2)));
        assert_eq!("in_stack0".parse(), Ok(FieldLabel::In("stack0".into())));
        assert_eq!("out".parse(), Ok(FieldLabel::Out(String::new())));
        assert!("s0@0".parse::<FieldLabel>().is_err());
        assert!("frob".parse::<FieldLabel>().is_err());
        assert!("in_".parse::<FieldLabel>().is_err());
    }

    pub(crate) fn arb_label() -> impl Strategy<Value = FieldLabel> {
        prop_oneof![
            Just(FieldLabel::Load),
            Just(FieldLabel::Store),
            "[a-z][a-z0-9]{0,4}".prop_map(FieldLabel::In),
            "[a-z][a-z0-9]{0,4}".prop_map(FieldLabel::Out),
            (1u32..128, -64i64..64).prop_map(|(b, o)| FieldLabel::field(b, o)),
        ]
    }

    proptest! {
        #[test]
        fn variance_is_a_homomorphism(
            u in prop::collection::vec(arb_label(), 0..6),
            v in prop::collection::vec(arb_label(), 0..6),
        ) {
            let uv: Vec<_> = u.iter().chain(v.iter()).cloned().collect();
            prop_assert_eq!(variance_of_word(&uv), variance_of_word(&u) * variance_of_word(&v));
        }

        #[test]
        fn label_display_round_trips(l in arb_label()) {
            prop_assert_eq!(l.to_string().parse::<FieldLabel>(), Ok(l));
        }
    }
}
