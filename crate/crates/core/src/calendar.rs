//! Partitions of the high-frequency positions `0..H` into halves, quarters
//! and months.

use std::ops::Range;

use crate::error::{Error, Result};

/// Standard non-leap month lengths.
pub const NON_LEAP_MONTHS: [usize; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

/// Contiguous partitions of `0..H`. Halves are unions of quarters and, when
/// months exist, quarters are unions of months.
#[derive(Debug, Clone, PartialEq)]
pub struct Calendar {
    h: usize,
    halves: Vec<Range<usize>>,
    quarters: Vec<Range<usize>>,
    months: Option<Vec<Range<usize>>>,
}

fn blocks_from_lengths(lengths: &[usize]) -> Vec<Range<usize>> {
    let mut start = 0;
    lengths
        .iter()
        .map(|&len| {
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn merge(blocks: &[Range<usize>], group: usize) -> Vec<Range<usize>> {
    blocks
        .chunks(group)
        .map(|c| c[0].start..c[c.len() - 1].end)
        .collect()
}

fn even_lengths(h: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|j| (j + 1) * h / parts - j * h / parts)
        .collect()
}

impl Calendar {
    /// 365 days, standard months, quarters of 90/91/92/92 days.
    pub fn non_leap() -> Self {
        Self::from_month_lengths(&NON_LEAP_MONTHS).expect("static calendar is valid")
    }

    /// Calendar built from twelve month lengths.
    pub fn from_month_lengths(lengths: &[usize]) -> Result<Self> {
        if lengths.len() != 12 || lengths.contains(&0) {
            return Err(Error::invalid("month calendar needs twelve non-empty months"));
        }
        let months = blocks_from_lengths(lengths);
        let quarters = merge(&months, 3);
        let halves = merge(&quarters, 2);
        Ok(Calendar {
            h: lengths.iter().sum(),
            halves,
            quarters,
            months: Some(months),
        })
    }

    /// Near-equal contiguous blocks for an arbitrary `h`: the non-leap
    /// calendar when `h == 365`, months when `h >= 12`, otherwise quarters
    /// only (which needs `h >= 4`).
    pub fn for_length(h: usize) -> Result<Self> {
        if h == 365 {
            return Ok(Self::non_leap());
        }
        if h >= 12 {
            return Self::from_month_lengths(&even_lengths(h, 12));
        }
        if h < 4 {
            return Err(Error::invalid(format!(
                "calendar needs at least 4 positions for quarters, got {h}"
            )));
        }
        let quarters = blocks_from_lengths(&even_lengths(h, 4));
        let halves = merge(&quarters, 2);
        Ok(Calendar {
            h,
            halves,
            quarters,
            months: None,
        })
    }

    /// Calendar with explicit quarter lengths and no months.
    pub fn from_quarter_lengths(lengths: [usize; 4]) -> Result<Self> {
        if lengths.contains(&0) {
            return Err(Error::invalid("empty calendar period"));
        }
        let quarters = blocks_from_lengths(&lengths);
        let halves = merge(&quarters, 2);
        Ok(Calendar {
            h: lengths.iter().sum(),
            halves,
            quarters,
            months: None,
        })
    }

    pub fn len(&self) -> usize {
        self.h
    }

    pub fn is_empty(&self) -> bool {
        self.h == 0
    }

    pub fn halves(&self) -> &[Range<usize>] {
        &self.halves
    }

    pub fn quarters(&self) -> &[Range<usize>] {
        &self.quarters
    }

    pub fn months(&self) -> Result<&[Range<usize>]> {
        self.months
            .as_deref()
            .ok_or_else(|| Error::invalid(format!("calendar of length {} has no months", self.h)))
    }

    pub fn quarter_lengths(&self) -> Vec<usize> {
        self.quarters.iter().map(|r| r.len()).collect()
    }
}

impl Default for Calendar {
    fn default() -> Self {
        Self::non_leap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_leap_quarters() {
        let c = Calendar::non_leap();
        assert_eq!(c.len(), 365);
        assert_eq!(c.quarter_lengths(), vec![90, 91, 92, 92]);
        assert_eq!(c.halves()[0], 0..181);
        assert_eq!(c.months().unwrap().len(), 12);
    }

    #[test]
    fn partitions_cover_exactly_once() {
        for h in [4, 5, 7, 12, 13, 100, 365] {
            let c = Calendar::for_length(h).unwrap();
            for parts in [c.halves(), c.quarters()] {
                assert_eq!(parts[0].start, 0);
                assert_eq!(parts.last().unwrap().end, h);
                for w in parts.windows(2) {
                    assert_eq!(w[0].end, w[1].start);
                    assert!(!w[0].is_empty());
                }
            }
        }
    }

    #[test]
    fn too_short_rejected() {
        assert!(Calendar::for_length(3).is_err());
        assert!(Calendar::for_length(4).unwrap().months().is_err());
    }
}
