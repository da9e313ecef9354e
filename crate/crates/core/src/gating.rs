use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Two bits selecting which reasoning traces precede the actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GatingSignals {
    pub textual: bool,
    pub visual: bool,
}

impl GatingSignals {
    pub const NON_COT: Self = Self::new(false, false);
    pub const TEXTUAL: Self = Self::new(true, false);
    pub const VISUAL: Self = Self::new(false, true);
    pub const MULTIMODAL: Self = Self::new(true, true);
    pub const ALL: [Self; 4] = [Self::NON_COT, Self::TEXTUAL, Self::VISUAL, Self::MULTIMODAL];
    pub const COT: [Self; 3] = [Self::TEXTUAL, Self::VISUAL, Self::MULTIMODAL];

    pub const fn new(textual: bool, visual: bool) -> Self {
        Self { textual, visual }
    }

    pub fn is_cot(self) -> bool {
        self.textual || self.visual
    }

    pub fn name(self) -> &'static str {
        match (self.textual, self.visual) {
            (false, false) => "non-cot",
            (true, false) => "t-cot",
            (false, true) => "v-cot",
            (true, true) => "mm-cot",
        }
    }

    pub fn bits(self) -> (u8, u8) {
        (self.textual as u8, self.visual as u8)
    }
}

impl fmt::Display for GatingSignals {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GatingSignals {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "non-cot" | "00" | "0,0" => Ok(Self::NON_COT),
            "t-cot" | "10" | "1,0" => Ok(Self::TEXTUAL),
            "v-cot" | "01" | "0,1" => Ok(Self::VISUAL),
            "mm-cot" | "11" | "1,1" => Ok(Self::MULTIMODAL),
            _ => Err(Error::InvalidConfig(format!("unknown mode '{s}'"))),
        }
    }
}

/// Parses a plus-separated list of mode names, e.g. `non-cot+v-cot`.
pub fn parse_mode_set(s: &str) -> Result<Vec<GatingSignals>, Error> {
    if s.trim() == "all" {
        return Ok(GatingSignals::ALL.to_vec());
    }
    let mut modes: Vec<GatingSignals> = s
        .split(['+', ' '])
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    modes.sort();
    modes.dedup();
    if modes.is_empty() {
        return Err(Error::InvalidConfig("empty mode set".into()));
    }
    Ok(modes)
}

pub fn mode_set_name(modes: &[GatingSignals]) -> String {
    modes.iter().map(|m| m.name()).collect::<Vec<_>>().join("+")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in GatingSignals::ALL {
            assert_eq!(m.name().parse::<GatingSignals>().unwrap(), m);
        }
        assert_eq!(GatingSignals::ALL.iter().filter(|m| m.is_cot()).count(), 3);
    }

    #[test]
    fn mode_sets() {
        let s = parse_mode_set("v-cot+non-cot").unwrap();
        assert_eq!(s, vec![GatingSignals::NON_COT, GatingSignals::VISUAL]);
        assert_eq!(mode_set_name(&s), "non-cot+v-cot");
        assert!(parse_mode_set("").is_err());
    }
}
