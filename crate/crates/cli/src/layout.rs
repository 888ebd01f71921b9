//! Grouping files: one line per dimension naming its fine coordinate range
//! and the lower bound of every group.
//!
//! ```text
//! # name first last : group lower bounds
//! age  10   104  : 10 15 20 25 30 35 40 45 50 55 60 65 70 75 80 85 90 95 100
//! year 1960 2019 : every 5
//! ```
//!
//! Fine coordinates are integers in unit steps from `first` to `last`
//! inclusive. `every w` is shorthand for groups of width `w` starting at
//! `first`.

use std::fmt::Write as _;
use std::path::Path;

use pclm::GroupingSpec;
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Dimension {
    pub name: String,
    pub first: i64,
    pub last: i64,
    pub lower_bounds: Vec<i64>,
}

impl Dimension {
    pub fn new(name: &str, first: i64, last: i64, lower_bounds: Vec<i64>) -> std::result::Result<Self, String> {
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(format!("dimension name {name:?} must be non-empty and alphanumeric"));
        }
        if name == "count" || name == "exposure" {
            return Err(format!("dimension name {name:?} is reserved"));
        }
        if first > last {
            return Err(format!("dimension {name}: first coordinate {first} exceeds last {last}"));
        }
        if lower_bounds.first() != Some(&first) {
            return Err(format!("dimension {name}: the first group must start at {first}"));
        }
        if let Some(w) = lower_bounds.windows(2).find(|w| w[1] <= w[0]) {
            return Err(format!("dimension {name}: group bounds must increase, got {} then {}", w[0], w[1]));
        }
        if let Some(b) = lower_bounds.iter().find(|&&b| b > last) {
            return Err(format!("dimension {name}: group bound {b} lies beyond the last coordinate {last}"));
        }
        Ok(Self { name: name.to_string(), first, last, lower_bounds })
    }

    pub fn uniform(name: &str, first: i64, last: i64, width: i64) -> std::result::Result<Self, String> {
        if width <= 0 {
            return Err(format!("dimension {name}: group width must be positive, got {width}"));
        }
        Self::new(name, first, last, (first..=last).step_by(width as usize).collect())
    }

    pub fn n_fine(&self) -> usize {
        (self.last - self.first + 1) as usize
    }

    pub fn n_groups(&self) -> usize {
        self.lower_bounds.len()
    }

    pub fn coordinates(&self) -> impl Iterator<Item = i64> + '_ {
        self.first..=self.last
    }

    pub fn fine_index(&self, coord: i64) -> Option<usize> {
        (self.first..=self.last).contains(&coord).then(|| (coord - self.first) as usize)
    }

    pub fn group_index(&self, label: i64) -> Option<usize> {
        self.lower_bounds.binary_search(&label).ok()
    }

    pub fn grouping(&self) -> GroupingSpec {
        let starts = self.lower_bounds.iter().map(|b| (b - self.first) as usize).collect();
        GroupingSpec::from_starts(starts, self.n_fine()).expect("bounds validated on construction")
    }

    /// Groups that touch either end of the coordinate range.
    pub fn is_boundary_group(&self, group: usize) -> bool {
        group == 0 || group + 1 == self.n_groups()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Layout {
    pub dims: Vec<Dimension>,
}

impl Layout {
    pub fn new(dims: Vec<Dimension>) -> std::result::Result<Self, String> {
        if dims.is_empty() {
            return Err("a layout needs at least one dimension".into());
        }
        for (i, d) in dims.iter().enumerate() {
            if dims[..i].iter().any(|o| o.name == d.name) {
                return Err(format!("dimension {} is declared twice", d.name));
            }
        }
        Ok(Self { dims })
    }

    /// Ages 10..=104 and years 1960..=2019, both in five-year groups.
    pub fn sweden() -> Self {
        Self::new(vec![
            Dimension::uniform("age", 10, 104, 5).unwrap(),
            Dimension::uniform("year", 1960, 2019, 5).unwrap(),
        ])
        .unwrap()
    }

    /// Ages 0..=104 in five-year groups with an open 90+ group, single
    /// years 2000..=2019 and weeks 1..=52.
    pub fn spain() -> Self {
        let mut ages: Vec<i64> = (0..=85).step_by(5).collect();
        ages.push(90);
        Self::new(vec![
            Dimension::new("age", 0, 104, ages).unwrap(),
            Dimension::uniform("year", 2000, 2019, 1).unwrap(),
            Dimension::uniform("week", 1, 52, 1).unwrap(),
        ])
        .unwrap()
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn fine_dims(&self) -> Vec<usize> {
        self.dims.iter().map(Dimension::n_fine).collect()
    }

    pub fn group_dims(&self) -> Vec<usize> {
        self.dims.iter().map(Dimension::n_groups).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.dims.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn groupings(&self) -> Vec<GroupingSpec> {
        self.dims.iter().map(Dimension::grouping).collect()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err =
            |line: usize, message: String| CliError::Parse { path: path.to_path_buf(), line: line as u64, message };
        let mut dims: Vec<Dimension> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let (head, tail) =
                line.split_once(':').ok_or_else(|| err(lineno, "expected `name first last : bounds`".into()))?;
            let head: Vec<&str> = head.split_whitespace().collect();
            let [name, first, last] = head[..] else {
                return Err(err(lineno, "expected a name and two coordinates before `:`".into()));
            };
            let int = |s: &str| s.parse::<i64>().map_err(|_| err(lineno, format!("{s:?} is not an integer")));
            let (first, last) = (int(first)?, int(last)?);
            let tail: Vec<&str> = tail.split_whitespace().collect();
            let dim = match tail[..] {
                ["every", w] => Dimension::uniform(name, first, last, int(w)?),
                _ => {
                    let bounds = tail.iter().map(|s| int(s)).collect::<Result<Vec<_>>>()?;
                    Dimension::new(name, first, last, bounds)
                }
            }
            .map_err(|m| err(lineno, m))?;
            if dims.iter().any(|d| d.name == dim.name) {
                return Err(err(lineno, format!("dimension {} is declared twice", dim.name)));
            }
            dims.push(dim);
        }
        Self::new(dims).map_err(|m| CliError::Data { path: path.to_path_buf(), message: m })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# name first last : group lower bounds\n");
        for d in &self.dims {
            let bounds: Vec<String> = d.lower_bounds.iter().map(i64::to_string).collect();
            writeln!(out, "{} {} {} : {}", d.name, d.first, d.last, bounds.join(" ")).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Layout> {
        Layout::parse(text, Path::new("grouping.txt"))
    }

    #[test]
    fn round_trip() {
        for layout in [Layout::sweden(), Layout::spain()] {
            assert_eq!(parse(&layout.to_text()).unwrap(), layout);
        }
    }

    #[test]
    fn built_in_layouts_have_expected_extents() {
        assert_eq!(Layout::sweden().fine_dims(), vec![95, 60]);
        assert_eq!(Layout::sweden().group_dims(), vec![19, 12]);
        assert_eq!(Layout::spain().fine_dims(), vec![105, 20, 52]);
        assert_eq!(Layout::spain().group_dims(), vec![19, 20, 52]);
        assert_eq!(Layout::spain().dims[0].grouping().group_range(18), 90..105);
    }

    #[test]
    fn every_shorthand() {
        let l = parse("age 10 24 : every 5\nyear 1 3 : 1 2 3 # single years\n").unwrap();
        assert_eq!(l.dims[0].lower_bounds, vec![10, 15, 20]);
        assert_eq!(l.dims[1].n_groups(), 3);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("# header\nage 10 24 : 10 15\nyear 5 1 : 5\n").unwrap_err();
        assert!(e.to_string().starts_with("grouping.txt:3:"), "{e}");
        let e = parse("age 10 24 : 11 15\n").unwrap_err();
        assert!(e.to_string().contains("must start at 10"), "{e}");
        assert!(parse("age 10 24 : 10 x\n").is_err());
        assert!(parse("age 10 24 : 10\nage 1 2 : 1\n").is_err());
        assert!(parse("\n# nothing\n").is_err());
        assert!(parse("count 1 2 : 1\n").is_err());
    }

    #[test]
    fn lookups() {
        let d = &Layout::sweden().dims[0];
        assert_eq!(d.group_index(15), Some(1));
        assert_eq!(d.group_index(16), None);
        assert_eq!(d.fine_index(104), Some(94));
        assert_eq!(d.fine_index(105), None);
        assert!(d.is_boundary_group(18) && !d.is_boundary_group(1));
    }
}
