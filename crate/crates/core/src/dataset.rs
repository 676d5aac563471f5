//! JSON-lines datasets and demographic expansion of vignette templates.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Answer, DatasetKind, Dosage, EvalItem, Label};

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(alias = "vignette", alias = "abstract")]
    pub context: String,
    pub question: String,
    #[serde(alias = "final_decision")]
    pub answer: String,
    #[serde(alias = "long_answer")]
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dosage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographics: Option<BTreeMap<String, String>>,
}

impl DatasetRecord {
    pub fn from_item(item: &EvalItem) -> Self {
        DatasetRecord {
            id: Some(item.id.clone()),
            context: item.context.clone(),
            question: item.question.clone(),
            answer: item.ground_label.answer.as_str().to_lowercase(),
            explanation: item.ground_explanation.clone(),
            dosage: item.ground_label.dosage.map(|d| match d {
                Dosage::Low => "low".to_string(),
                Dosage::High => "high".to_string(),
            }),
            demographics: item.demographics.clone(),
        }
    }

    pub(crate) fn into_item(self, kind: DatasetKind, default_id: String) -> std::result::Result<EvalItem, String> {
        if self.question.trim().is_empty() {
            return Err("empty question".into());
        }
        if self.explanation.trim().is_empty() {
            return Err("empty explanation".into());
        }
        let answer = match self.answer.trim().to_ascii_lowercase().as_str() {
            "maybe" => Answer::Unknown,
            other => Answer::from_word(other).ok_or_else(|| format!("unrecognized answer `{}`", self.answer))?,
        };
        let dosage = match (kind, self.dosage.as_deref()) {
            (_, None) => None,
            (DatasetKind::Qpain, Some(d)) => {
                Some(Dosage::from_word(d.trim()).ok_or_else(|| format!("unrecognized dosage `{d}`"))?)
            }
            (_, Some(_)) => return Err(format!("dosage given for a {kind} record")),
        };
        let id = match self.id {
            Some(id) if !id.trim().is_empty() => id.trim().to_string(),
            _ => default_id,
        };
        Ok(EvalItem {
            id,
            dataset_kind: kind,
            context: self.context,
            question: self.question,
            ground_label: Label { answer, dosage },
            ground_explanation: self.explanation,
            demographics: self.demographics,
        })
    }
}

/// Items parsed from JSON-lines text plus one warning per skipped line.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub items: Vec<EvalItem>,
    pub warnings: Vec<String>,
}

pub fn parse_items(src: &str, kind: DatasetKind) -> LoadReport {
    let mut report = LoadReport::default();
    let mut ids = HashSet::new();
    for (idx, line) in src.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<DatasetRecord>(line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.into_item(kind, format!("{kind}-{line_no}")));
        match parsed {
            Ok(item) if !ids.insert(item.id.clone()) => {
                report.warnings.push(format!("line {line_no}: duplicate id `{}`", item.id));
            }
            Ok(item) => {
                if kind == DatasetKind::Qpain && item.demographics.is_none() && has_placeholders(&item) {
                    log::info!("line {line_no}: `{}` still has placeholders (un-augmented)", item.id);
                }
                report.items.push(item);
            }
            Err(e) => report.warnings.push(format!("line {line_no}: {e}")),
        }
    }
    report
}

/// Loads a dataset, logging skipped lines. Fails when nothing loads.
pub fn load_items(path: &Path, kind: DatasetKind) -> Result<Vec<EvalItem>> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report = parse_items(&src, kind);
    for w in &report.warnings {
        log::warn!("{}: {w}", path.display());
    }
    if report.items.is_empty() {
        return Err(Error::Dataset(format!("{} contains no valid records", path.display())));
    }
    Ok(report.items)
}

pub fn write_items<W: Write>(items: &[EvalItem], mut out: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, &DatasetRecord::from_item(item))?;
        out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NameList {
    pub race: String,
    pub gender: String,
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pronouns {
    pub subject: String,
    pub possessive: String,
    /// Word substituted for `[gender]`, e.g. "man".
    pub noun: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemographicConfig {
    pub races: Vec<String>,
    pub genders: Vec<String>,
    pub name_lists: Vec<NameList>,
    pub pronoun_map: BTreeMap<String, Pronouns>,
    /// Generic patient references replaced by the chosen name.
    #[serde(default = "default_aliases")]
    pub aliases: Vec<String>,
}

fn default_aliases() -> Vec<String> {
    vec!["Patient D".to_string()]
}

const DEFAULT_NAMES: [(&str, &str, [&str; 2]); 12] = [
    ("Black", "male", ["Darnell", "Jamal"]),
    ("Black", "female", ["Latonya", "Keisha"]),
    ("White", "male", ["Brett", "Connor"]),
    ("White", "female", ["Emily", "Katie"]),
    ("Asian", "male", ["Kwok", "Hiroshi"]),
    ("Asian", "female", ["Mei", "Yuna"]),
    ("Hispanic", "male", ["Rigoberto", "Ramiro"]),
    ("Hispanic", "female", ["Guadalupe", "Rosa"]),
    ("Indian/South Asian", "male", ["Arjun", "Rohan"]),
    ("Indian/South Asian", "female", ["Priya", "Ananya"]),
    ("Middle Eastern", "male", ["Omar", "Karim"]),
    ("Middle Eastern", "female", ["Layla", "Yasmin"]),
];

impl Default for DemographicConfig {
    fn default() -> Self {
        let pronouns = |s: &str, p: &str, n: &str| Pronouns {
            subject: s.into(),
            possessive: p.into(),
            noun: n.into(),
        };
        DemographicConfig {
            races: [
                "Black",
                "White",
                "Asian",
                "Hispanic",
                "Indian/South Asian",
                "Middle Eastern",
            ]
            .map(String::from)
            .to_vec(),
            genders: vec!["male".into(), "female".into()],
            name_lists: DEFAULT_NAMES
                .iter()
                .map(|(race, gender, names)| NameList {
                    race: race.to_string(),
                    gender: gender.to_string(),
                    names: names.map(String::from).to_vec(),
                })
                .collect(),
            pronoun_map: BTreeMap::from([
                ("male".to_string(), pronouns("he", "his", "man")),
                ("female".to_string(), pronouns("she", "her", "woman")),
            ]),
            aliases: default_aliases(),
        }
    }
}

impl DemographicConfig {
    pub fn from_json_str(src: &str) -> Result<Self> {
        let cfg: DemographicConfig = serde_json::from_str(src)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&src)
    }

    pub fn names(&self, race: &str, gender: &str) -> &[String] {
        self.name_lists
            .iter()
            .find(|l| l.race == race && l.gender == gender)
            .map(|l| l.names.as_slice())
            .unwrap_or(&[])
    }

    pub fn validate(&self) -> Result<()> {
        if self.races.is_empty() || self.genders.is_empty() {
            return Err(Error::Config("demographics need at least one race and one gender".into()));
        }
        for gender in &self.genders {
            if !self.pronoun_map.contains_key(gender) {
                return Err(Error::Config(format!("no pronouns for gender `{gender}`")));
            }
            for race in &self.races {
                if self.names(race, gender).iter().all(|n| n.trim().is_empty()) {
                    return Err(Error::Config(format!("no names for ({race}, {gender})")));
                }
            }
        }
        Ok(())
    }

    /// Number of items one template expands into.
    pub fn combinations(&self) -> usize {
        self.races
            .iter()
            .flat_map(|r| self.genders.iter().map(move |g| self.names(r, g).len()))
            .sum()
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[([A-Za-z][A-Za-z _-]*)\]").expect("valid regex"))
}

pub fn has_placeholders(item: &EvalItem) -> bool {
    [&item.context, &item.question, &item.ground_explanation]
        .iter()
        .any(|t| placeholder_re().is_match(t))
}

fn at_sentence_start(before: &str) -> bool {
    match before.trim_end().chars().last() {
        None => true,
        Some(c) => matches!(c, '.' | '!' | '?' | ':'),
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

struct Fill<'a> {
    race: &'a str,
    name: &'a str,
    pronouns: &'a Pronouns,
}

fn fill(text: &str, f: &Fill<'_>, aliases: &[Regex]) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for caps in placeholder_re().captures_iter(text) {
        let whole = caps.get(0).expect("match");
        let key = caps[1].trim().to_ascii_lowercase();
        let value = match key.as_str() {
            "race" => f.race,
            "gender" => f.pronouns.noun.as_str(),
            "subject" => f.pronouns.subject.as_str(),
            "possessive" => f.pronouns.possessive.as_str(),
            "name" | "patient" => f.name,
            _ => return Err(Error::UnresolvedPlaceholder(whole.as_str().to_string())),
        };
        out.push_str(&text[cursor..whole.start()]);
        let sentence_start = at_sentence_start(&text[..whole.start()]);
        if sentence_start && matches!(key.as_str(), "subject" | "possessive" | "gender") {
            out.push_str(&capitalize(value));
        } else {
            out.push_str(value);
        }
        cursor = whole.end();
    }
    out.push_str(&text[cursor..]);
    for re in aliases {
        out = re.replace_all(&out, regex::NoExpand(f.name)).into_owned();
    }
    Ok(out)
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

/// Expands a vignette template into one item per (race, gender, name).
pub fn augment_qpain(template: &EvalItem, cfg: &DemographicConfig) -> Result<Vec<EvalItem>> {
    cfg.validate()?;
    let aliases: Vec<Regex> = cfg
        .aliases
        .iter()
        .filter(|a| !a.trim().is_empty())
        .map(|a| Regex::new(&format!(r"\b{}\b", regex::escape(a.trim()))).expect("escaped alias"))
        .collect();
    let fields = [&template.context, &template.question, &template.ground_explanation];
    let has_target = fields
        .iter()
        .any(|t| placeholder_re().is_match(t) || aliases.iter().any(|re| re.is_match(t)));
    if !has_target {
        return Err(Error::Dataset(format!(
            "`{}` has no placeholder or generic patient reference to fill",
            template.id
        )));
    }
    let mut out = Vec::with_capacity(cfg.combinations());
    for race in &cfg.races {
        for gender in &cfg.genders {
            let pronouns = &cfg.pronoun_map[gender];
            for (n, name) in cfg.names(race, gender).iter().enumerate() {
                let f = Fill { race, name, pronouns };
                let demographics = BTreeMap::from([
                    ("race".to_string(), race.clone()),
                    ("gender".to_string(), gender.clone()),
                    ("name".to_string(), name.clone()),
                    ("subject".to_string(), pronouns.subject.clone()),
                    ("possessive".to_string(), pronouns.possessive.clone()),
                ]);
                out.push(EvalItem {
                    id: format!("{}-{}-{}-{}-{}", template.id, slug(race), slug(gender), n + 1, slug(name)),
                    dataset_kind: template.dataset_kind,
                    context: fill(&template.context, &f, &aliases)?,
                    question: fill(&template.question, &f, &aliases)?,
                    ground_label: template.ground_label,
                    ground_explanation: fill(&template.ground_explanation, &f, &aliases)?,
                    demographics: Some(demographics),
                });
            }
        }
    }
    Ok(out)
}
