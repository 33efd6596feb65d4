//! Assignment of historical weather years to the long-term and short-term
//! models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Published 35-year list used for capacity expansion.
pub const PUBLISHED_LT_YEARS: [i32; 35] = [
    1960, 1996, 1953, 2020, 1979, 1971, 1998, 2014, 2013, 1989, 1956, 1978, 1951, 2006, 1966,
    1995, 2004, 2011, 2009, 1959, 1961, 1954, 2005, 2010, 1972, 1986, 2016, 1975, 1955, 1964,
    2019, 2003, 1962, 1985, 1957,
];

/// Published 35-year list used for out-of-sample dispatch.
pub const PUBLISHED_ST_YEARS: [i32; 35] = [
    2007, 1987, 1974, 1976, 1981, 1993, 1988, 2015, 1958, 2018, 1970, 1990, 1968, 1991, 1965,
    1963, 1992, 1973, 2002, 2001, 1982, 1967, 1999, 2017, 1994, 1984, 1977, 1980, 2012, 2000,
    1983, 1997, 1969, 1952, 2008,
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearSplit {
    pub lt_years: Vec<i32>,
    pub st_years: Vec<i32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitMode {
    PublishedFixture,
    /// First half of `first..=last` for the long-term model, rest short-term.
    Chronological { first: i32, last: i32 },
    Custom { lt_years: Vec<i32>, st_years: Vec<i32> },
}

pub fn split_years(mode: &SplitMode) -> Result<YearSplit> {
    match mode {
        SplitMode::PublishedFixture => Ok(YearSplit {
            lt_years: PUBLISHED_LT_YEARS.to_vec(),
            st_years: PUBLISHED_ST_YEARS.to_vec(),
        }),
        SplitMode::Chronological { first, last } => {
            if last < first {
                return Err(Error::Config(format!("year range {first}..={last} is empty")));
            }
            let years: Vec<i32> = (*first..=*last).collect();
            let half = years.len().div_ceil(2);
            Ok(YearSplit {
                lt_years: years[..half].to_vec(),
                st_years: years[half..].to_vec(),
            })
        }
        SplitMode::Custom { lt_years, st_years } => {
            if let Some(y) = lt_years.iter().find(|y| st_years.contains(y)) {
                return Err(Error::Config(format!("year {y} is in both the long-term and short-term lists")));
            }
            Ok(YearSplit {
                lt_years: lt_years.clone(),
                st_years: st_years.clone(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_lists() {
        let s = split_years(&SplitMode::PublishedFixture).unwrap();
        assert_eq!(&s.lt_years[..4], &[1960, 1996, 1953, 2020]);
        assert_eq!(&s.st_years[..3], &[2007, 1987, 1974]);
        let mut all: Vec<i32> = s.lt_years.iter().chain(&s.st_years).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (1951..=2020).collect::<Vec<_>>());
    }

    #[test]
    fn chronological_halves() {
        let s = split_years(&SplitMode::Chronological { first: 1951, last: 2020 }).unwrap();
        assert_eq!(s.lt_years, (1951..=1985).collect::<Vec<_>>());
        assert_eq!(s.st_years, (1986..=2020).collect::<Vec<_>>());
    }

    #[test]
    fn custom_overlap_rejected() {
        let mode = SplitMode::Custom { lt_years: vec![2000, 2001], st_years: vec![2001] };
        assert!(split_years(&mode).is_err());
    }
}
