//! Emotion-intensity lexicons and template expansion.
//!
//! Lexicon files are UTF-8, one entry per line, columns separated by a
//! single tab (aligned with spaces below):
//!
//! ```text
//! # word  emotion  intensity  [pos]
//! vile      disgust  0.916  adjective
//! outraged  anger    0.964  verb-past-participle
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. The part-of-speech
//! column is optional and defaults to `other`; tagging is the caller's job.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMOTION_SLOT: &str = "<emotion_word>";
pub const GROUP_SLOT: &str = "<group>";

/// Protected groups used for the negative-emotion-about-protected-groups concept.
pub const PROTECTED_GROUPS: [&str; 7] = [
    "women",
    "trans people",
    "gay people",
    "black people",
    "disabled people",
    "Muslims",
    "immigrants",
];

/// Non-protected groups used by the per-emotion challenge sets.
pub const NON_PROTECTED_GROUPS: [&str; 8] = [
    "Canadians",
    "Chinese people",
    "doctors",
    "teachers",
    "school children",
    "football players",
    "my neighbours",
    "men",
];

pub const CHALLENGE_TEMPLATES_PER_CLASS: usize = 5;
pub const CHALLENGE_GROUPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pos {
    Adjective,
    VerbPast,
    VerbPastParticiple,
    Other,
}

impl Pos {
    pub const ALL: [Pos; 4] = [
        Pos::Adjective,
        Pos::VerbPast,
        Pos::VerbPastParticiple,
        Pos::Other,
    ];

    /// Adjectives, past-tense verbs and past participles.
    pub const DESCRIPTIVE: [Pos; 3] = [Pos::Adjective, Pos::VerbPast, Pos::VerbPastParticiple];

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Adjective => "adjective",
            Pos::VerbPast => "verb-past",
            Pos::VerbPastParticiple => "verb-past-participle",
            Pos::Other => "other",
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pos {
    type Err = String;

    /// Accepts the canonical names and Penn Treebank tags (`JJ*`, `VBD`, `VBN`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adjective" | "JJ" | "JJR" | "JJS" => Ok(Pos::Adjective),
            "verb-past" | "VBD" => Ok(Pos::VerbPast),
            "verb-past-participle" | "VBN" => Ok(Pos::VerbPastParticiple),
            "other" => Ok(Pos::Other),
            other if !other.is_empty() && other.chars().all(|c| c.is_ascii_uppercase() || c == '$') => {
                Ok(Pos::Other)
            }
            other => Err(format!("unknown part-of-speech tag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub word: String,
    pub emotion: String,
    pub intensity: f64,
    pub pos: Pos,
}

impl LexiconEntry {
    pub fn new(word: impl Into<String>, emotion: impl Into<String>, intensity: f64, pos: Pos) -> Result<Self> {
        let entry = LexiconEntry {
            word: word.into(),
            emotion: emotion.into(),
            intensity,
            pos,
        };
        entry.validate()?;
        Ok(entry)
    }

    fn validate(&self) -> Result<()> {
        if self.word.is_empty() || self.word.chars().any(char::is_whitespace) {
            return Err(Error::Validation(format!(
                "lexicon word `{}` must be non-empty without whitespace",
                self.word
            )));
        }
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(Error::Validation(format!(
                "intensity {} for `{}` is outside [0, 1]",
                self.intensity, self.word
            )));
        }
        Ok(())
    }
}

/// Parses a tab-separated lexicon. A first data line whose intensity column
/// is a column name (`score`, `intensity`, ...) is treated as a header.
pub fn parse_lexicon<R: BufRead>(reader: R) -> Result<Vec<LexiconEntry>> {
    let mut entries = Vec::new();
    let mut seen_data = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected at least 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let intensity = match fields[2].parse::<f64>() {
            Ok(v) => v,
            Err(_) if !seen_data && is_header_column(fields[2]) => {
                seen_data = true;
                continue;
            }
            Err(_) => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("intensity `{}` is not a number", fields[2]),
                })
            }
        };
        seen_data = true;
        let pos = match fields.get(3) {
            Some(tag) if !tag.is_empty() => tag.parse::<Pos>().map_err(|message| Error::Parse {
                line: lineno,
                message,
            })?,
            _ => Pos::Other,
        };
        let entry = LexiconEntry {
            word: fields[0].to_string(),
            emotion: fields[1].to_string(),
            intensity,
            pos,
        };
        entry
            .validate()
            .map_err(|e| Error::Validation(format!("line {lineno}: {}", strip_prefix(&e))))?;
        entries.push(entry);
    }
    Ok(entries)
}

fn is_header_column(field: &str) -> bool {
    let lower = field.to_ascii_lowercase();
    lower.contains("score") || lower.contains("intensity")
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Validation(m) => m.clone(),
        other => other.to_string(),
    }
}

pub fn write_lexicon<W: Write>(entries: &[LexiconEntry], mut out: W) -> Result<()> {
    writeln!(out, "# word\temotion\tintensity\tpos")?;
    for e in entries {
        writeln!(out, "{}\t{}\t{}\t{}", e.word, e.emotion, e.intensity, e.pos)?;
    }
    Ok(())
}

/// Selection criteria for [`filter_lexicon`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconFilter {
    /// Emotion categories to keep; empty keeps every category.
    #[serde(default)]
    pub categories: BTreeSet<String>,
    #[serde(default = "default_min_intensity")]
    pub min_intensity: f64,
    #[serde(default = "default_pos")]
    pub allowed_pos: BTreeSet<Pos>,
}

fn default_min_intensity() -> f64 {
    0.5
}

fn default_pos() -> BTreeSet<Pos> {
    Pos::DESCRIPTIVE.into_iter().collect()
}

impl Default for LexiconFilter {
    fn default() -> Self {
        LexiconFilter {
            categories: BTreeSet::new(),
            min_intensity: default_min_intensity(),
            allowed_pos: default_pos(),
        }
    }
}

impl LexiconFilter {
    pub fn new<I, S>(categories: I, min_intensity: f64, allowed_pos: &[Pos]) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LexiconFilter {
            categories: categories.into_iter().map(Into::into).collect(),
            min_intensity,
            allowed_pos: allowed_pos.iter().copied().collect(),
        }
    }

    pub fn apply(&self, entries: &[LexiconEntry]) -> Result<Vec<LexiconEntry>> {
        filter_lexicon(entries, &self.categories, self.min_intensity, &self.allowed_pos)
    }
}

/// Keeps entries in one of `categories` (all if empty) with
/// `intensity >= min_intensity` and an allowed POS tag. A word occurring
/// more than once keeps the position of its first surviving row and the
/// data of its highest-intensity surviving row.
pub fn filter_lexicon(
    entries: &[LexiconEntry],
    categories: &BTreeSet<String>,
    min_intensity: f64,
    allowed_pos: &BTreeSet<Pos>,
) -> Result<Vec<LexiconEntry>> {
    if !(0.0..=1.0).contains(&min_intensity) {
        return Err(Error::Validation(format!(
            "min_intensity {min_intensity} is outside [0, 1]"
        )));
    }
    let mut out: Vec<LexiconEntry> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for entry in entries {
        let keep = (categories.is_empty() || categories.contains(&entry.emotion))
            && entry.intensity >= min_intensity
            && allowed_pos.contains(&entry.pos);
        if !keep {
            continue;
        }
        match slot.get(entry.word.as_str()) {
            Some(&i) => {
                if entry.intensity > out[i].intensity {
                    out[i] = entry.clone();
                }
            }
            None => {
                slot.insert(entry.word.as_str(), out.len());
                out.push(entry.clone());
            }
        }
    }
    Ok(out)
}

/// Templates, groups and words defining a concept's example texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSpec {
    pub name: String,
    pub templates: Vec<String>,
    #[serde(default)]
    pub groups: Vec<String>,
    #[serde(default)]
    pub words: Vec<LexiconEntry>,
}

impl ConceptSpec {
    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::Validation(format!("concept `{}` has no templates", self.name)));
        }
        for t in &self.templates {
            let slots = t.matches(EMOTION_SLOT).count();
            if slots != 1 {
                return Err(Error::Validation(format!(
                    "template `{t}` must contain {EMOTION_SLOT} exactly once (found {slots})"
                )));
            }
            if t.matches(GROUP_SLOT).count() > 1 {
                return Err(Error::Validation(format!(
                    "template `{t}` contains {GROUP_SLOT} more than once"
                )));
            }
            if t.contains(GROUP_SLOT) && self.groups.is_empty() {
                return Err(Error::Validation(format!(
                    "template `{t}` uses {GROUP_SLOT} but concept `{}` lists no groups",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Number of texts [`expand_concept`] produces.
    pub fn expansion_size(&self) -> usize {
        self.templates
            .iter()
            .map(|t| {
                let groups = if t.contains(GROUP_SLOT) { self.groups.len() } else { 1 };
                groups * self.words.len()
            })
            .sum()
    }
}

/// Substitutes every word (and every group, where the template has a group
/// slot) into every template. Order: template, then group, then word.
pub fn expand_concept(spec: &ConceptSpec) -> Result<Vec<String>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.expansion_size());
    for template in &spec.templates {
        if template.contains(GROUP_SLOT) {
            for group in &spec.groups {
                let with_group = template.replacen(GROUP_SLOT, group, 1);
                for w in &spec.words {
                    out.push(with_group.replacen(EMOTION_SLOT, &w.word, 1));
                }
            }
        } else {
            for w in &spec.words {
                out.push(template.replacen(EMOTION_SLOT, &w.word, 1));
            }
        }
    }
    Ok(out)
}

/// Five abusive and five non-abusive group templates for one emotion
/// category. The emotion word is written into each template; only the
/// `<group>` slot is substituted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeTemplateSet {
    pub emotion: String,
    pub abusive_templates: Vec<String>,
    pub nonabusive_templates: Vec<String>,
    #[serde(default = "default_challenge_groups")]
    pub groups: Vec<String>,
}

fn default_challenge_groups() -> Vec<String> {
    NON_PROTECTED_GROUPS.iter().map(|g| g.to_string()).collect()
}

/// One generated challenge text with its class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChallengeText {
    pub text: String,
    pub abusive: bool,
}

impl ChallengeTemplateSet {
    pub fn validate(&self) -> Result<()> {
        for (class, templates) in [
            ("abusive", &self.abusive_templates),
            ("non-abusive", &self.nonabusive_templates),
        ] {
            if templates.len() != CHALLENGE_TEMPLATES_PER_CLASS {
                return Err(Error::Validation(format!(
                    "challenge set `{}` needs exactly {CHALLENGE_TEMPLATES_PER_CLASS} {class} templates, found {}",
                    self.emotion,
                    templates.len()
                )));
            }
            if let Some(t) = templates.iter().find(|t| t.matches(GROUP_SLOT).count() != 1) {
                return Err(Error::Validation(format!(
                    "challenge template `{t}` must contain {GROUP_SLOT} exactly once"
                )));
            }
        }
        if self.groups.len() != CHALLENGE_GROUPS {
            return Err(Error::Validation(format!(
                "challenge set `{}` needs exactly {CHALLENGE_GROUPS} groups, found {}",
                self.emotion,
                self.groups.len()
            )));
        }
        Ok(())
    }

    /// Abusive texts first, then non-abusive; each class ordered by
    /// template, then group.
    pub fn expand(&self) -> Result<Vec<ChallengeText>> {
        self.validate()?;
        let mut out = Vec::with_capacity(2 * CHALLENGE_TEMPLATES_PER_CLASS * CHALLENGE_GROUPS);
        for (abusive, templates) in [(true, &self.abusive_templates), (false, &self.nonabusive_templates)] {
            for t in templates {
                for g in &self.groups {
                    out.push(ChallengeText {
                        text: t.replacen(GROUP_SLOT, g, 1),
                        abusive,
                    });
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(word: &str, emotion: &str, intensity: f64, pos: Pos) -> LexiconEntry {
        LexiconEntry::new(word, emotion, intensity, pos).unwrap()
    }

    #[test]
    fn parses_single_row() {
        let got = parse_lexicon("vile\tdisgust\t0.916\tadjective\n".as_bytes()).unwrap();
        assert_eq!(got, vec![entry("vile", "disgust", 0.916, Pos::Adjective)]);
    }

    #[test]
    fn empty_stream_is_empty() {
        assert!(parse_lexicon("".as_bytes()).unwrap().is_empty());
        assert!(parse_lexicon("# only a comment\n\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn intensity_out_of_range_is_validation_error() {
        let err = parse_lexicon("vile\tdisgust\t1.5".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err = parse_lexicon("vile\tdisgust\t0.9\nbroken line\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
        let err = parse_lexicon("vile\tdisgust\tzero".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn missing_pos_defaults_to_other_and_treebank_tags_map() {
        let got = parse_lexicon("a\tfear\t0.6\nb\tfear\t0.7\tVBN\nc\tfear\t0.8\tNN\n".as_bytes()).unwrap();
        assert_eq!(got[0].pos, Pos::Other);
        assert_eq!(got[1].pos, Pos::VerbPastParticiple);
        assert_eq!(got[2].pos, Pos::Other);
    }

    #[test]
    fn header_row_is_skipped() {
        let got = parse_lexicon("word\temotion\temotion-intensity-score\nvile\tdisgust\t0.9\n".as_bytes()).unwrap();
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn filter_keeps_matching_and_dedups_by_max_intensity() {
        let entries = vec![
            entry("vile", "disgust", 0.6, Pos::Adjective),
            entry("calm", "joy", 0.9, Pos::Adjective),
            entry("furious", "anger", 0.9, Pos::Adjective),
            entry("vile", "anger", 0.8, Pos::Adjective),
            entry("rage", "anger", 0.9, Pos::Other),
            entry("meh", "anger", 0.3, Pos::Adjective),
        ];
        let f = LexiconFilter::new(["disgust", "anger"], 0.5, &Pos::DESCRIPTIVE);
        let got = f.apply(&entries).unwrap();
        assert_eq!(
            got,
            vec![
                entry("vile", "anger", 0.8, Pos::Adjective),
                entry("furious", "anger", 0.9, Pos::Adjective),
            ]
        );
    }

    #[test]
    fn filter_pass_through_and_empty() {
        let entries = vec![
            entry("a", "x", 0.0, Pos::Other),
            entry("b", "y", 1.0, Pos::VerbPast),
        ];
        let all = LexiconFilter::new(Vec::<String>::new(), 0.0, &Pos::ALL);
        assert_eq!(all.apply(&entries).unwrap(), entries);

        let weak = vec![entry("a", "x", 0.3, Pos::Adjective), entry("b", "x", 0.3, Pos::Adjective)];
        let f = LexiconFilter::new(["x"], 0.5, &Pos::ALL);
        assert!(f.apply(&weak).unwrap().is_empty());

        assert!(filter_lexicon(&entries, &BTreeSet::new(), 1.5, &BTreeSet::new()).is_err());
    }

    #[test]
    fn expand_protected_group_template() {
        let words: Vec<_> = (0..368).map(|i| entry(&format!("w{i}"), "disgust", 0.9, Pos::Adjective)).collect();
        let spec = ConceptSpec {
            name: "DesNegEm".into(),
            templates: vec!["<group> are <emotion_word>.".into()],
            groups: PROTECTED_GROUPS.iter().map(|s| s.to_string()).collect(),
            words,
        };
        let texts = expand_concept(&spec).unwrap();
        assert_eq!(texts.len(), 2576);
        assert_eq!(texts[0], "women are w0.");
        assert_eq!(texts[368], "trans people are w0.");
    }

    #[test]
    fn expand_groupless_template() {
        let spec = ConceptSpec {
            name: "fear".into(),
            templates: vec!["They are <emotion_word>".into()],
            groups: vec![],
            words: vec![entry("scary", "fear", 0.8, Pos::Adjective)],
        };
        assert_eq!(expand_concept(&spec).unwrap(), vec!["They are scary".to_string()]);
    }

    #[test]
    fn template_without_slot_is_rejected() {
        let mut spec = ConceptSpec {
            name: "c".into(),
            templates: vec!["They are here".into()],
            groups: vec![],
            words: vec![],
        };
        assert!(matches!(expand_concept(&spec), Err(Error::Validation(_))));
        spec.templates = vec!["<group> are <emotion_word>".into()];
        assert!(expand_concept(&spec).is_err(), "group slot without groups");
    }

    #[test]
    fn challenge_set_expands_to_forty_per_class() {
        let set = ChallengeTemplateSet {
            emotion: "disgust".into(),
            abusive_templates: (0..5).map(|i| format!("<group> are known for being trash {i}.")).collect(),
            nonabusive_templates: (0..5).map(|i| format!("<group> were disgusted {i}.")).collect(),
            groups: default_challenge_groups(),
        };
        let texts = set.expand().unwrap();
        assert_eq!(texts.iter().filter(|t| t.abusive).count(), 40);
        assert_eq!(texts.iter().filter(|t| !t.abusive).count(), 40);
        assert_eq!(texts[0].text, "Canadians are known for being trash 0.");

        let mut short = set.clone();
        short.abusive_templates.pop();
        assert!(short.expand().is_err());
    }
}
