use serde::{Deserialize, Serialize};

use super::SceneError;

/// Per-symbol downlink/uplink pattern of one radio frame. `true` marks a DL
/// symbol that carries sensing energy; UL symbols are acquisition holes.
///
/// On disk the mask is a run-length pattern repeated a number of times, e.g.
/// `pattern = "52D18U"`, `repeats = 16`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MaskSpec", into = "MaskSpec")]
pub struct TddMask(Vec<bool>);

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MaskSpec {
    pattern: String,
    #[serde(default = "one")]
    repeats: usize,
}

fn one() -> usize {
    1
}

impl TddMask {
    pub fn new(dl: Vec<bool>) -> Self {
        Self(dl)
    }

    pub fn full_dl(symbols: usize) -> Self {
        Self(vec![true; symbols])
    }

    /// `dl` downlink symbols followed by `ul` uplink symbols, `repeats` times.
    pub fn periodic(dl: usize, ul: usize, repeats: usize) -> Self {
        let mut period = vec![true; dl];
        period.extend(std::iter::repeat_n(false, ul));
        Self(period.repeat(repeats))
    }

    /// FR2 mu=3 default: 16 repetitions of a 5-slot DDDSU-like period
    /// (3 D slots, a special slot with 10 D symbols, then 4 + 14 UL symbols),
    /// giving 832 DL out of 1120 symbols.
    pub fn fr2_default() -> Self {
        Self::periodic(52, 18, 16)
    }

    /// Parses a run-length pattern such as `"52D18U"` or `"DDDU"`.
    pub fn from_pattern(pattern: &str, repeats: usize) -> Result<Self, SceneError> {
        let mut period = Vec::new();
        let mut count = String::new();
        for ch in pattern.chars().filter(|c| !c.is_whitespace()) {
            match ch {
                '0'..='9' => count.push(ch),
                'D' | 'd' | 'U' | 'u' => {
                    let n = if count.is_empty() {
                        1
                    } else {
                        count
                            .parse::<usize>()
                            .map_err(|e| SceneError::Invalid(format!("mask pattern: {e}")))?
                    };
                    count.clear();
                    period.extend(std::iter::repeat_n(matches!(ch, 'D' | 'd'), n));
                }
                other => {
                    return Err(SceneError::Invalid(format!(
                        "mask pattern: unexpected character {other:?}"
                    )))
                }
            }
        }
        if !count.is_empty() || period.is_empty() {
            return Err(SceneError::Invalid(format!("mask pattern {pattern:?} is malformed")));
        }
        Ok(Self(period.repeat(repeats)))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_dl(&self, symbol: usize) -> bool {
        self.0[symbol]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn dl_count(&self) -> usize {
        self.0.iter().filter(|&&d| d).count()
    }

    pub fn dl_symbols(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &d)| d).map(|(i, _)| i)
    }

    /// Smallest repetition period of the mask, in symbols, when it contains UL
    /// gaps and repeats at least twice within the frame. `None` for an
    /// all-DL frame or a pattern without inner repetition.
    pub fn gap_period(&self) -> Option<usize> {
        let n = self.0.len();
        if n == 0 || self.0.iter().all(|&d| d) {
            return None;
        }
        (1..n)
            .filter(|p| n % p == 0)
            .find(|&p| (p..n).all(|i| self.0[i] == self.0[i - p]))
    }

    fn minimal_spec(&self) -> MaskSpec {
        let period = self.gap_period().unwrap_or(self.0.len()).max(1);
        let mut pattern = String::new();
        let mut iter = self.0[..period.min(self.0.len())].iter().peekable();
        while let Some(&d) = iter.next() {
            let mut run = 1;
            while iter.peek() == Some(&&d) {
                iter.next();
                run += 1;
            }
            pattern.push_str(&format!("{run}{}", if d { 'D' } else { 'U' }));
        }
        MaskSpec {
            pattern,
            repeats: if self.0.is_empty() { 0 } else { self.0.len() / period },
        }
    }
}

impl TryFrom<MaskSpec> for TddMask {
    type Error = SceneError;

    fn try_from(spec: MaskSpec) -> Result<Self, Self::Error> {
        TddMask::from_pattern(&spec.pattern, spec.repeats)
    }
}

impl From<TddMask> for MaskSpec {
    fn from(mask: TddMask) -> Self {
        mask.minimal_spec()
    }
}
