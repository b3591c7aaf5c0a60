//! Tag inventories with a total fine→coarse mapping.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The semantic tag inventory as published: coarse class, fine tag, gloss.
const SEMTAGS: &[(&str, &str, &str)] = &[
    ("ANA", "PRO", "pronoun"),
    ("ANA", "DEF", "definite"),
    ("ANA", "HAS", "possessive"),
    ("ANA", "REF", "reflexive"),
    ("ANA", "EMP", "emphasizing"),
    ("ACT", "GRE", "greeting"),
    ("ACT", "ITJ", "interjection"),
    ("ACT", "HES", "hesitation"),
    ("ACT", "QUE", "interrogative"),
    ("ATT", "QUA", "quantity"),
    ("ATT", "UOM", "measurement"),
    ("ATT", "IST", "intersective"),
    ("ATT", "REL", "relation"),
    ("ATT", "RLI", "rel. inv. scope"),
    ("ATT", "SST", "subsective"),
    ("ATT", "PRI", "privative"),
    ("ATT", "INT", "intensifier"),
    ("ATT", "SCO", "score"),
    ("LOG", "ALT", "alternative"),
    ("LOG", "EXC", "exclusive"),
    ("LOG", "NIL", "empty"),
    ("LOG", "DIS", "disjunct./exist."),
    ("LOG", "IMP", "implication"),
    ("LOG", "AND", "conjunct./univ."),
    ("LOG", "BUT", "contrast"),
    ("COM", "EQA", "equative"),
    ("COM", "MOR", "comparative pos."),
    ("COM", "LES", "comparative neg."),
    ("COM", "TOP", "pos. superlative"),
    ("COM", "BOT", "neg. superlative"),
    ("COM", "ORD", "ordinal"),
    ("DEM", "PRX", "proximal"),
    ("DEM", "MED", "medial"),
    ("DEM", "DST", "distal"),
    ("DIS", "SUB", "subordinate"),
    ("DIS", "COO", "coordinate"),
    ("DIS", "APP", "appositional"),
    ("MOD", "NOT", "negation"),
    ("MOD", "NEC", "necessity"),
    ("MOD", "POS", "possibility"),
    ("ENT", "CON", "concept"),
    ("ENT", "ROL", "role"),
    ("NAM", "GPE", "geo-political ent."),
    ("NAM", "PER", "person"),
    ("NAM", "LOC", "location"),
    ("NAM", "ORG", "organisation"),
    ("NAM", "ART", "artifact"),
    ("NAM", "NAT", "natural obj./phen."),
    ("NAM", "HAP", "happening"),
    ("NAM", "URL", "url"),
    ("EVE", "EXS", "untensed simple"),
    ("EVE", "ENS", "present simple"),
    ("EVE", "EPS", "past simple"),
    ("EVE", "EFS", "future simple"),
    ("EVE", "EXG", "untensed prog."),
    ("EVE", "ENG", "present prog."),
    ("EVE", "EPG", "past prog."),
    ("EVE", "EFG", "future prog."),
    ("EVE", "EXT", "untensed perfect"),
    ("EVE", "ENT", "present perfect"),
    ("EVE", "EPT", "past perfect"),
    ("EVE", "EFT", "future perfect"),
    ("EVE", "ETG", "perfect prog."),
    ("EVE", "ETV", "perfect passive"),
    ("EVE", "EXV", "passive"),
    ("TNS", "NOW", "present tense"),
    ("TNS", "PST", "past tense"),
    ("TNS", "FUT", "future tense"),
    ("TIM", "DOM", "day of month"),
    ("TIM", "YOC", "year of century"),
    ("TIM", "DOW", "day of week"),
    ("TIM", "MOY", "month of year"),
    ("TIM", "DEC", "decade"),
    ("TIM", "CLO", "clocktime"),
];

/// Universal POS tags of UD v1 (v1.2/v1.3 still used `CONJ`).
const UD_POS: &[(&str, &str)] = &[
    ("ADJ", "adjective"),
    ("ADP", "adposition"),
    ("ADV", "adverb"),
    ("AUX", "auxiliary"),
    ("CONJ", "coordinating conjunction"),
    ("DET", "determiner"),
    ("INTJ", "interjection"),
    ("NOUN", "noun"),
    ("NUM", "numeral"),
    ("PART", "particle"),
    ("PRON", "pronoun"),
    ("PROPN", "proper noun"),
    ("PUNCT", "punctuation"),
    ("SCONJ", "subordinating conjunction"),
    ("SYM", "symbol"),
    ("VERB", "verb"),
    ("X", "other"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinTagset {
    Semtag,
    UdPos,
}

impl std::str::FromStr for BuiltinTagset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semtag" => Ok(BuiltinTagset::Semtag),
            "ud_pos" => Ok(BuiltinTagset::UdPos),
            _ => Err(Error::Config(format!("unknown builtin tagset {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub enum TagSource<'a> {
    Builtin(BuiltinTagset),
    File(&'a Path),
}

/// Ordered fine and coarse inventories with a total fine→coarse map.
///
/// Flat tagsets (such as UD POS) are their own coarse level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "TagSetRepr", into = "TagSetRepr")]
pub struct TagSet {
    name: String,
    fine: Vec<String>,
    glosses: Vec<String>,
    coarse: Vec<String>,
    parent: Vec<usize>,
    fallback: usize,
    fine_index: HashMap<String, usize>,
    coarse_index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct TagSetRepr {
    name: String,
    fine: Vec<String>,
    glosses: Vec<String>,
    coarse: Vec<String>,
    parent: Vec<usize>,
    fallback: usize,
}

impl From<TagSetRepr> for TagSet {
    fn from(r: TagSetRepr) -> Self {
        TagSet::assemble(r.name, r.fine, r.glosses, r.coarse, r.parent, r.fallback)
    }
}

impl From<TagSet> for TagSetRepr {
    fn from(t: TagSet) -> Self {
        TagSetRepr {
            name: t.name,
            fine: t.fine,
            glosses: t.glosses,
            coarse: t.coarse,
            parent: t.parent,
            fallback: t.fallback,
        }
    }
}

pub fn load_tagset(source: TagSource<'_>) -> Result<TagSet> {
    match source {
        TagSource::Builtin(BuiltinTagset::Semtag) => Ok(TagSet::semtag()),
        TagSource::Builtin(BuiltinTagset::UdPos) => Ok(TagSet::ud_pos()),
        TagSource::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            TagSet::parse(&text, &path.display().to_string())
        }
    }
}

impl TagSet {
    fn assemble(
        name: String,
        fine: Vec<String>,
        glosses: Vec<String>,
        coarse: Vec<String>,
        parent: Vec<usize>,
        fallback: usize,
    ) -> Self {
        let fine_index = fine
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let coarse_index = coarse
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        TagSet {
            name,
            fine,
            glosses,
            coarse,
            parent,
            fallback,
            fine_index,
            coarse_index,
        }
    }

    pub fn semtag() -> Self {
        let mut coarse: Vec<String> = Vec::new();
        let mut parent = Vec::new();
        for (c, _, _) in SEMTAGS {
            if coarse.last().map(String::as_str) != Some(*c) {
                coarse.push(c.to_string());
            }
            parent.push(coarse.len() - 1);
        }
        let fine: Vec<String> = SEMTAGS.iter().map(|(_, f, _)| f.to_string()).collect();
        let fallback = fine
            .iter()
            .position(|t| t == "NIL")
            .expect("NIL in inventory");
        TagSet::assemble(
            "semtag".into(),
            fine,
            SEMTAGS.iter().map(|(_, _, g)| g.to_string()).collect(),
            coarse,
            parent,
            fallback,
        )
    }

    pub fn ud_pos() -> Self {
        let fine: Vec<String> = UD_POS.iter().map(|(t, _)| t.to_string()).collect();
        let n = fine.len();
        TagSet::assemble(
            "ud_pos".into(),
            fine.clone(),
            UD_POS.iter().map(|(_, g)| g.to_string()).collect(),
            fine,
            (0..n).collect(),
            n - 1,
        )
    }

    /// Flat tagset over `tags` (each its own coarse class), fallback first.
    pub fn flat(name: &str, tags: &[&str]) -> Result<Self> {
        let mut text = String::new();
        for t in tags {
            text.push_str(&format!("{t}\t{t}\t\n"));
        }
        let mut ts = TagSet::parse(&text, name)?;
        ts.name = name.to_string();
        Ok(ts)
    }

    /// Parses the three-column `coarse<TAB>fine<TAB>gloss` format. An empty
    /// coarse column continues the previous block; `#` lines are comments.
    /// The first fine tag is the lenient-mode fallback.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut fine = Vec::new();
        let mut glosses = Vec::new();
        let mut coarse: Vec<String> = Vec::new();
        let mut parent = Vec::new();
        let mut seen = HashMap::new();
        let mut current: Option<usize> = None;
        let fmt = |line: usize, detail: String| Error::Format {
            path: origin.to_string(),
            line,
            detail,
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 2 {
                return Err(fmt(line_no, "expected coarse<TAB>fine<TAB>gloss".into()));
            }
            let (c, f) = (cols[0].trim(), cols[1].trim());
            let gloss = cols.get(2).map_or("", |g| g.trim());
            if f.is_empty() {
                return Err(fmt(line_no, "empty fine tag".into()));
            }
            if !c.is_empty() {
                let ix = match coarse.iter().position(|x| x == c) {
                    Some(ix) => ix,
                    None => {
                        coarse.push(c.to_string());
                        coarse.len() - 1
                    }
                };
                current = Some(ix);
            }
            let Some(p) = current else {
                return Err(fmt(
                    line_no,
                    format!("unknown coarse tag for {f:?}: no block open"),
                ));
            };
            if let Some(prev) = seen.insert(f.to_string(), line_no) {
                return Err(fmt(
                    line_no,
                    format!("duplicate fine tag {f:?} (first on line {prev})"),
                ));
            }
            fine.push(f.to_string());
            glosses.push(gloss.to_string());
            parent.push(p);
        }
        if fine.len() < 2 {
            return Err(fmt(0, "a tagset needs at least two fine tags".into()));
        }
        Ok(TagSet::assemble(
            origin.to_string(),
            fine,
            glosses,
            coarse,
            parent,
            0,
        ))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn fine_tags(&self) -> &[String] {
        &self.fine
    }

    pub fn coarse_tags(&self) -> &[String] {
        &self.coarse
    }

    pub fn gloss(&self, fine: usize) -> &str {
        &self.glosses[fine]
    }

    pub fn fine_index(&self, tag: &str) -> Option<usize> {
        self.fine_index.get(tag).copied()
    }

    pub fn coarse_index(&self, tag: &str) -> Option<usize> {
        self.coarse_index.get(tag).copied()
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.fine_index.contains_key(tag)
    }

    /// Coarse index of fine index `fine`.
    pub fn parent(&self, fine: usize) -> usize {
        self.parent[fine]
    }

    pub fn fallback(&self) -> &str {
        &self.fine[self.fallback]
    }

    /// The unique coarse parent of a fine tag.
    pub fn fine_to_coarse(&self, tag: &str) -> Result<&str> {
        let ix = self.fine_index(tag).ok_or_else(|| Error::UnknownTag {
            tag: tag.to_string(),
            context: Some(format!("not in tagset {}", self.name)),
        })?;
        Ok(&self.coarse[self.parent[ix]])
    }

    /// Writes the three-column format accepted by [`TagSet::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut last = None;
        for (i, f) in self.fine.iter().enumerate() {
            let p = self.parent[i];
            let c = if last == Some(p) { "" } else { &self.coarse[p] };
            last = Some(p);
            out.push_str(&format!("{c}\t{f}\t{}\n", self.glosses[i]));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_checks_against_the_inventory() {
        let t = TagSet::semtag();
        for (fine, coarse) in [
            ("PRX", "DEM"),
            ("GPE", "NAM"),
            ("NOT", "MOD"),
            ("ENS", "EVE"),
            ("CON", "ENT"),
            ("QUE", "ACT"),
            ("ENT", "EVE"),
            ("DIS", "LOG"),
        ] {
            assert_eq!(t.fine_to_coarse(fine).unwrap(), coarse, "{fine}");
        }
    }

    #[test]
    fn published_block_sizes() {
        let t = TagSet::semtag();
        assert_eq!(
            t.coarse_tags(),
            [
                "ANA", "ACT", "ATT", "LOG", "COM", "DEM", "DIS", "MOD", "ENT", "NAM", "EVE", "TNS",
                "TIM"
            ]
        );
        let mut sizes = vec![0; 13];
        for i in 0..t.fine_tags().len() {
            sizes[t.parent(i)] += 1;
        }
        assert_eq!(sizes, [5, 4, 9, 7, 6, 3, 3, 3, 2, 8, 15, 3, 6]);
        assert_eq!(t.fine_tags().len(), 74);
    }

    #[test]
    fn unknown_tag_is_named() {
        let err = TagSet::semtag()
            .fine_to_coarse("XYZ")
            .unwrap_err()
            .to_string();
        assert!(err.contains("XYZ"));
    }

    #[test]
    fn file_format_round_trips() {
        let t = TagSet::semtag();
        let back = TagSet::parse(&t.to_text(), "semtag").unwrap();
        assert_eq!(back.fine_tags(), t.fine_tags());
        assert_eq!(back.coarse_tags(), t.coarse_tags());
        for f in t.fine_tags() {
            assert_eq!(
                back.fine_to_coarse(f).unwrap(),
                t.fine_to_coarse(f).unwrap()
            );
        }
    }

    #[test]
    fn file_errors_carry_line_numbers() {
        let dup = "# comment\nA\tX\tx\n\tY\ty\nB\tX\tagain\n";
        match TagSet::parse(dup, "t.tsv") {
            Err(Error::Format { line, detail, .. }) => {
                assert_eq!(line, 4);
                assert!(detail.contains("duplicate"));
            }
            other => panic!("{other:?}"),
        }
        match TagSet::parse("\tX\tx\n", "t.tsv") {
            Err(Error::Format { line, detail, .. }) => {
                assert_eq!(line, 1);
                assert!(detail.contains("unknown coarse"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ud_pos_is_flat() {
        let t = TagSet::ud_pos();
        assert_eq!(t.fine_tags().len(), 17);
        assert_eq!(t.fine_to_coarse("NOUN").unwrap(), "NOUN");
        assert_eq!(t.fallback(), "X");
    }

    #[test]
    fn serde_round_trip_rebuilds_indices() {
        let t = TagSet::semtag();
        let s = serde_json::to_string(&t).unwrap();
        let back: TagSet = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.fine_index("PRX"), t.fine_index("PRX"));
    }
}
