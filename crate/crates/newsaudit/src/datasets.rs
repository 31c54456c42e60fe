//! Reference dataset files: MBFC and PSL ratings, IAB overrides, and the
//! plain host lists used by attribution.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use newsaudit_core::attribution::{normalize_domain_name, HostSet, NormalizationRules, SuffixRules};
use newsaudit_core::enrichment::{IabCategory, MbfcRating, PslLabel};

use crate::error::{Error, Result};

/// Reads a headed CSV into `(line, row)` pairs. A file with no bytes at
/// all is an empty table.
fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let headers = reader.headers().map_err(|e| Error::parse(path, 1, e))?.clone();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line() as usize), e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = record.deserialize(Some(&headers)).map_err(|e| Error::parse(path, line, e))?;
        out.push((line, row));
    }
    Ok(out)
}

fn insert_last_wins<V>(map: &mut BTreeMap<String, V>, path: &Path, line: usize, domain: String, value: V) {
    if map.insert(domain.clone(), value).is_some() {
        log::warn!("{}:{line}: duplicate domain {domain:?}, keeping the later row", path.display());
    }
}

fn domain(path: &Path, line: usize, raw: &str, rules: &NormalizationRules) -> Result<String> {
    normalize_domain_name(raw, rules).map_err(|e| Error::parse(path, line, format!("domain {raw:?}: {e}")))
}

/// `domain,bias_label,factuality_label`. Either label may be blank.
pub fn load_mbfc(path: &Path, rules: &NormalizationRules) -> Result<BTreeMap<String, MbfcRating>> {
    #[derive(Deserialize)]
    struct Row {
        domain: String,
        bias_label: String,
        factuality_label: String,
    }
    let mut map = BTreeMap::new();
    for (line, row) in read_rows::<Row>(path)? {
        let d = domain(path, line, &row.domain, rules)?;
        let rating =
            MbfcRating::from_labels(&row.bias_label, &row.factuality_label).map_err(|e| Error::parse(path, line, e))?;
        insert_last_wins(&mut map, path, line, d, rating);
    }
    Ok(map)
}

/// `domain,psl_label`.
pub fn load_psl(path: &Path, rules: &NormalizationRules) -> Result<BTreeMap<String, PslLabel>> {
    #[derive(Deserialize)]
    struct Row {
        domain: String,
        psl_label: String,
    }
    let mut map = BTreeMap::new();
    for (line, row) in read_rows::<Row>(path)? {
        let d = domain(path, line, &row.domain, rules)?;
        let label = PslLabel::parse(&row.psl_label).map_err(|e| Error::parse(path, line, e))?;
        insert_last_wins(&mut map, path, line, d, label);
    }
    Ok(map)
}

/// `domain,iab_category`; categories must belong to the taxonomy.
pub fn load_overrides(path: &Path, rules: &NormalizationRules) -> Result<BTreeMap<String, IabCategory>> {
    #[derive(Deserialize)]
    struct Row {
        domain: String,
        iab_category: String,
    }
    let mut map = BTreeMap::new();
    for (line, row) in read_rows::<Row>(path)? {
        let d = domain(path, line, &row.domain, rules)?;
        let cat = IabCategory::parse(&row.iab_category).map_err(|e| Error::parse(path, line, e))?;
        insert_last_wins(&mut map, path, line, d, cat);
    }
    Ok(map)
}

/// `domain,category,confidence` rows for the fixture IAB provider. Blank
/// category means the provider returns nothing for the domain.
pub fn load_iab_fixture(path: &Path, rules: &NormalizationRules) -> Result<BTreeMap<String, Option<(String, f64)>>> {
    #[derive(Deserialize)]
    struct Row {
        domain: String,
        #[serde(default)]
        category: String,
        #[serde(default)]
        confidence: Option<f64>,
    }
    let mut map = BTreeMap::new();
    for (line, row) in read_rows::<Row>(path)? {
        let d = domain(path, line, &row.domain, rules)?;
        let verdict = match (row.category.is_empty(), row.confidence) {
            (true, _) => None,
            (false, Some(c)) => Some((row.category, c)),
            (false, None) => return Err(Error::parse(path, line, "category without confidence")),
        };
        insert_last_wins(&mut map, path, line, d, verdict);
    }
    Ok(map)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_host_list(path: &Path) -> Result<HostSet> {
    Ok(HostSet::parse(&read_text(path)?))
}

pub fn load_suffix_rules(path: &Path) -> Result<SuffixRules> {
    Ok(SuffixRules::parse(&read_text(path)?))
}
