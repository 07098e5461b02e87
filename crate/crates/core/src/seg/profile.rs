use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::SegError;

/// Binary interest vector `HP_i`; written as a string of `0`/`1` characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct InterestProfile {
    bits: Vec<bool>,
}

impl InterestProfile {
    pub fn new(bits: Vec<bool>) -> Self {
        InterestProfile { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

impl fmt::Display for InterestProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for InterestProfile {
    type Err = SegError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(SegError::BadProfile(format!(
                    "unexpected character {other:?} in {s:?}"
                ))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(InterestProfile::new)
    }
}

impl Serialize for InterestProfile {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InterestProfile {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Cosine similarity of two binary interest vectors, in `[0, 1]`.
///
/// An all-zero profile shares nothing with anyone, so the similarity is 0.
pub fn homophily(a: &InterestProfile, b: &InterestProfile) -> Result<f64, SegError> {
    if a.len() != b.len() {
        return Err(SegError::ProfileLength {
            left: a.len(),
            right: b.len(),
        });
    }
    let common = a
        .bits
        .iter()
        .zip(&b.bits)
        .filter(|(&x, &y)| x && y)
        .count();
    let (na, nb) = (a.count_ones(), b.count_ones());
    if na == 0 || nb == 0 {
        return Ok(0.0);
    }
    Ok((common as f64 / ((na * nb) as f64).sqrt()).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> InterestProfile {
        s.parse().unwrap()
    }

    #[test]
    fn worked_values() {
        assert_eq!(homophily(&p("110"), &p("110")).unwrap(), 1.0);
        assert_eq!(homophily(&p("110"), &p("001")).unwrap(), 0.0);
        assert!((homophily(&p("110"), &p("101")).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(homophily(&p("000"), &p("101")).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(
            homophily(&p("11"), &p("110")),
            Err(SegError::ProfileLength { left: 2, right: 3 })
        );
    }

    #[test]
    fn parse_and_display() {
        let profile = p("1011_0001");
        assert_eq!(profile.len(), 8);
        assert_eq!(profile.to_string(), "10110001");
        assert!("10x1".parse::<InterestProfile>().is_err());
        let json = serde_json::to_string(&profile).unwrap();
        assert_eq!(json, "\"10110001\"");
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(bits in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..40)) {
            let (a, b): (Vec<_>, Vec<_>) = bits.into_iter().unzip();
            let (a, b) = (InterestProfile::new(a), InterestProfile::new(b));
            let ab = homophily(&a, &b).unwrap();
            prop_assert_eq!(ab, homophily(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }
}
