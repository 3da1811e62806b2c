//! The Twitch AutoMod toxicity taxonomy: four categories, eight subclasses.
//!
//! Canonical machine names are lowercase snake-case tokens; they are the keys
//! used in the label store and every report. The human-readable names and a
//! few common shorthands parse as aliases.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Harassment,
    Discrimination,
    SexualContent,
    Profanity,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Harassment,
        Category::Discrimination,
        Category::SexualContent,
        Category::Profanity,
    ];

    /// Canonical machine token, stable across releases.
    pub fn token(self) -> &'static str {
        match self {
            Category::Harassment => "harassment",
            Category::Discrimination => "discrimination",
            Category::SexualContent => "sexual_content",
            Category::Profanity => "profanity",
        }
    }

    /// Human-readable name as used in the moderation rules.
    pub fn display_name(self) -> &'static str {
        match self {
            Category::Harassment => "Harassment",
            Category::Discrimination => "Discrimination and Slurs",
            Category::SexualContent => "Sexual Content",
            Category::Profanity => "Profanity",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subclass {
    Aggression,
    Bullying,
    Disability,
    SexualityGender,
    Misogyny,
    RaceEthnicityReligion,
    SexBasedTerms,
    Swearing,
}

impl Subclass {
    pub const ALL: [Subclass; 8] = [
        Subclass::Aggression,
        Subclass::Bullying,
        Subclass::Disability,
        Subclass::SexualityGender,
        Subclass::Misogyny,
        Subclass::RaceEthnicityReligion,
        Subclass::SexBasedTerms,
        Subclass::Swearing,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Subclass::Aggression => "aggression",
            Subclass::Bullying => "bullying",
            Subclass::Disability => "disability",
            Subclass::SexualityGender => "sexuality_gender",
            Subclass::Misogyny => "misogyny",
            Subclass::RaceEthnicityReligion => "race_ethnicity_religion",
            Subclass::SexBasedTerms => "sex_based_terms",
            Subclass::Swearing => "swearing",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Subclass::Aggression => "Aggression",
            Subclass::Bullying => "Bullying",
            Subclass::Disability => "Disability",
            Subclass::SexualityGender => "Sexuality, sex, or gender",
            Subclass::Misogyny => "Misogyny",
            Subclass::RaceEthnicityReligion => "Race, ethnicity, or religion",
            Subclass::SexBasedTerms => "Sex-based terms",
            Subclass::Swearing => "Swearing",
        }
    }

    /// Moderation-rule definition of the subclass, embedded verbatim in the
    /// classification prompts.
    pub fn definition(self) -> &'static str {
        match self {
            Subclass::Aggression => "Threatening, inciting, or promoting violence or other harm",
            Subclass::Bullying => "Name-calling, insults, or antagonization",
            Subclass::Disability => {
                "Demonstrating hatred or prejudice based on perceived or actual mental or physical abilities"
            }
            Subclass::SexualityGender => {
                "Demonstrating hatred or prejudice based on sexual identity, sexual orientation, gender identity, or gender expression"
            }
            Subclass::Misogyny => {
                "Demonstrating hatred or prejudice against women, including sexual objectification"
            }
            Subclass::RaceEthnicityReligion => {
                "Demonstrating hatred or prejudice based on race, ethnicity, or religion"
            }
            Subclass::SexBasedTerms => "Sexual acts, anatomy",
            Subclass::Swearing => "Swear words, &^#$%*",
        }
    }

    /// Position within [`Subclass::ALL`]; indexes distribution vectors.
    pub fn index(self) -> usize {
        Subclass::ALL.iter().position(|&s| s == self).unwrap()
    }

    pub fn category(self) -> Category {
        category_of(self)
    }
}

impl std::fmt::Display for Subclass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// The unique parent category of a subclass.
pub fn category_of(subclass: Subclass) -> Category {
    match subclass {
        Subclass::Aggression | Subclass::Bullying => Category::Harassment,
        Subclass::Disability
        | Subclass::SexualityGender
        | Subclass::Misogyny
        | Subclass::RaceEthnicityReligion => Category::Discrimination,
        Subclass::SexBasedTerms => Category::SexualContent,
        Subclass::Swearing => Category::Profanity,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unrecognized subclass label '{0}'")]
pub struct ParseFailure(pub String);

/// Lowercases, replaces punctuation with spaces, and collapses whitespace, so
/// "Race, ethnicity, or religion" and "race_ethnicity_religion" normalize to
/// the same word sequence.
pub fn normalize_label_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last_space = true;
    for c in text.chars() {
        if c.is_alphanumeric() {
            for lc in c.to_lowercase() {
                out.push(lc);
            }
            last_space = false;
        } else if !last_space {
            out.push(' ');
            last_space = true;
        }
    }
    while out.ends_with(' ') {
        out.pop();
    }
    out
}

/// Normalized alias word-sequences, one entry per accepted spelling.
/// Multi-word aliases come first so longest-match scanning works by order.
pub fn alias_table() -> &'static [(&'static str, Subclass)] {
    &[
        ("race ethnicity or religion", Subclass::RaceEthnicityReligion),
        ("race ethnicity religion", Subclass::RaceEthnicityReligion),
        ("sexuality sex or gender", Subclass::SexualityGender),
        ("sexuality or gender", Subclass::SexualityGender),
        ("sexuality gender", Subclass::SexualityGender),
        ("profanity targeted", Subclass::Swearing),
        ("sex based terms", Subclass::SexBasedTerms),
        ("sexual content", Subclass::SexBasedTerms),
        ("race religion", Subclass::RaceEthnicityReligion),
        ("aggression", Subclass::Aggression),
        ("bullying", Subclass::Bullying),
        ("disability", Subclass::Disability),
        ("misogyny", Subclass::Misogyny),
        ("race", Subclass::RaceEthnicityReligion),
        ("swearing", Subclass::Swearing),
        ("profanity", Subclass::Swearing),
    ]
}

/// Case-insensitive parse of a canonical subclass name or documented alias.
pub fn parse_subclass(text: &str) -> Result<Subclass, ParseFailure> {
    let normalized = normalize_label_text(text);
    alias_table()
        .iter()
        .find(|(alias, _)| *alias == normalized)
        .map(|&(_, s)| s)
        .ok_or_else(|| ParseFailure(text.to_string()))
}
