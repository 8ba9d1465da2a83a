use super::offline::NO_ANOMALY_BULLET;
use super::{
    Authenticity, DefectEntry, Finding, ReportModality, StructuredReport, DISCLAIMER, SECTION_TITLES,
};
use crate::error::{Error, Result};

const HEDGES: &[&str] = &[
    "may ",
    "might",
    "could",
    "suggest",
    "possibl",
    "likely",
    "hypothes",
    "perhaps",
    "consistent with",
    "compatible with",
    "indicat",
];

/// True for the canonical disclaimer sentence, or a sentence that ties
/// authenticity to an explicit negation or insufficiency.
pub(crate) fn is_disclaimer(s: &str) -> bool {
    let l = s.to_lowercase();
    if l.contains(&DISCLAIMER.to_lowercase().trim_end_matches('.').to_string()) {
        return true;
    }
    l.contains("authenticity")
        && ["cannot", "can not", "does not", "do not", "insufficient", "not sufficient", "not establish"]
            .iter()
            .any(|n| l.contains(n))
}

/// Strips markdown emphasis, heading marks and numbering from a header candidate.
fn header_text(line: &str) -> Option<String> {
    let t = line.trim();
    let is_md = t.starts_with('#');
    let is_bold = (t.starts_with("**") || t.starts_with("__"))
        && (t.trim_end_matches(':').ends_with("**") || t.trim_end_matches(':').ends_with("__"));
    let mut s = t.trim_start_matches('#').trim();
    s = s.trim_matches(|c| c == '*' || c == '_').trim();
    let lower = s.to_lowercase();
    let mut rest = lower.as_str();
    for p in ["section", "s"] {
        if let Some(r) = rest.strip_prefix(p) {
            if r.trim_start().starts_with(|c: char| c.is_ascii_digit()) {
                rest = r.trim_start();
            }
        }
    }
    let numbered = rest.starts_with(|c: char| c.is_ascii_digit());
    let rest = rest
        .trim_start_matches(|c: char| c.is_ascii_digit())
        .trim_start_matches(['.', ')', ':'])
        .trim()
        .trim_matches(|c| c == '*' || c == '_' || c == ':')
        .trim();
    if !(is_md || is_bold || numbered) || rest.is_empty() || rest.split_whitespace().count() > 8 {
        return None;
    }
    Some(rest.to_string())
}

fn section_of(header: &str) -> Option<usize> {
    if header.contains("authenticity") {
        Some(1)
    } else if header.contains("defect") || (header.contains("location") && header.contains("cause")) {
        Some(2)
    } else if header.contains("thermal") && (header.contains("output") || header.contains("analysis")) {
        Some(0)
    } else {
        None
    }
}

/// Splits section text into items: bullets, or `Label: text` lines, with
/// continuation lines folded in. Plain paragraphs become single items.
fn items(lines: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut open = false;
    for raw in lines {
        let t = raw.trim();
        if t.is_empty() {
            open = false;
            continue;
        }
        let bullet = ["- ", "* ", "• ", "+ "].iter().find_map(|b| t.strip_prefix(b));
        let starts_new = bullet.is_some() || label_of(t).is_some() || !open;
        let body = plain(bullet.unwrap_or(t).trim());
        if starts_new {
            out.push(body);
        } else if let Some(last) = out.last_mut() {
            last.push(' ');
            last.push_str(&body);
        }
        open = true;
    }
    out
}

/// Drops markdown emphasis so `*Location*:` reads as `Location:`.
fn plain(s: &str) -> String {
    s.replace(['*', '`'], "").replace("_:", ":").trim_start_matches('_').trim().to_string()
}

fn strip_emphasis(s: &str) -> &str {
    s.trim().trim_matches(|c| c == '*' || c == '_').trim()
}

/// `(label, rest)` when the line opens with a short `Label:` prefix.
fn label_of(s: &str) -> Option<(String, String)> {
    let (head, tail) = s.split_once(':')?;
    let label = strip_emphasis(head);
    if label.is_empty() || label.split_whitespace().count() > 4 || label.contains("http") {
        return None;
    }
    let tail = tail.trim().trim_start_matches(['*', '_']).trim();
    Some((label.to_lowercase(), tail.to_string()))
}

fn modality_from_label(label: &str) -> Option<ReportModality> {
    let l = label.to_lowercase();
    let l = l.trim();
    ReportModality::ALL
        .into_iter()
        .find(|m| l == m.name().to_lowercase() || l.starts_with(&format!("{} ", m.name().to_lowercase())))
}

/// Text of a `Field:` inside `s` up to the next `;` or next known field.
fn field(s: &str, names: &[&str]) -> Option<String> {
    let lower = s.to_lowercase();
    for n in names {
        if let Some(i) = lower.find(&format!("{n}:")) {
            let start = i + n.len() + 1;
            let tail = &s[start..];
            let end = tail.find(';').unwrap_or(tail.len());
            let v = strip_emphasis(&tail[..end]);
            let v = match v.to_lowercase().find(" interpretation:") {
                Some(j) => v[..j].trim(),
                None => v,
            };
            return Some(v.trim_end_matches('.').trim().to_string());
        }
    }
    None
}

fn parse_s1(lines: &[&str]) -> Vec<Finding> {
    items(lines)
        .into_iter()
        .filter_map(|it| {
            let (label, rest) = label_of(&it)?;
            let modality = modality_from_label(&label)?;
            let location_text = field(&rest, &["location"]).unwrap_or_else(|| rest.clone());
            let physical_interpretation = field(&rest, &["interpretation"]).unwrap_or_else(|| rest.clone());
            Some(Finding { modality, location_text, physical_interpretation })
        })
        .collect()
}

fn sentences(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = s.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        cur.push(c);
        if matches!(c, '.' | '!' | '?') && chars.get(i + 1).is_none_or(|n| n.is_whitespace()) {
            let t = cur.trim().to_string();
            if !t.is_empty() {
                out.push(t);
            }
            cur.clear();
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn parse_s2(lines: &[&str]) -> Authenticity {
    let mut a = Authenticity { observations: vec![], hypotheses: vec![], disclaimer: String::new() };
    for it in items(lines) {
        let (kind, body) = match label_of(&it) {
            Some((l, rest)) if l.starts_with("observation") => (Some(false), rest),
            Some((l, rest)) if l.starts_with("hypothes") => (Some(true), rest),
            _ => (None, it.clone()),
        };
        let parts = if kind.is_some() { vec![body] } else { sentences(&body) };
        for s in parts {
            if a.disclaimer.is_empty() && is_disclaimer(&s) {
                a.disclaimer = s;
                continue;
            }
            let hyp = kind.unwrap_or_else(|| {
                let l = s.to_lowercase();
                HEDGES.iter().any(|h| l.contains(h))
            });
            if hyp {
                a.hypotheses.push(s);
            } else {
                a.observations.push(s);
            }
        }
    }
    a
}

fn parse_s3(lines: &[&str]) -> (Vec<DefectEntry>, bool) {
    struct Pending {
        location: String,
        explicit: Option<Vec<ReportModality>>,
        cause: String,
        text: String,
    }
    let finish = |p: Pending| DefectEntry {
        supporting_modalities: p.explicit.unwrap_or_else(|| ReportModality::mentioned_in(&p.text)),
        location: p.location,
        tentative_cause: p.cause,
    };
    let mut out = Vec::new();
    let mut none = false;
    let mut cur: Option<Pending> = None;
    let sentinel = NO_ANOMALY_BULLET.to_lowercase();
    let sentinel = sentinel.trim_end_matches('.');
    for it in items(lines) {
        if it.to_lowercase().contains(sentinel) {
            none = true;
            continue;
        }
        let loc = field(&it, &["location"]);
        let mods =
            field(&it, &["supporting modalities", "modalities"]).map(|m| ReportModality::mentioned_in(&m));
        let cause = field(&it, &["tentative cause", "likely causes", "likely cause", "cause", "causes"]);
        match (loc, &mut cur) {
            // A bare `Location:` item opens a group that later items complete.
            (Some(l), _) => {
                if let Some(p) = cur.take() {
                    out.push(finish(p));
                }
                cur =
                    Some(Pending { location: l, explicit: mods, cause: cause.unwrap_or_default(), text: it });
            }
            (None, Some(p)) if cause.is_some() || mods.is_some() => {
                if let Some(c) = cause {
                    p.cause = if p.cause.is_empty() { c } else { format!("{}; {c}", p.cause) };
                }
                if let Some(m) = mods {
                    p.explicit = Some(m);
                }
                p.text.push(' ');
                p.text.push_str(&it);
            }
            (None, _) => {
                if let Some(p) = cur.take() {
                    out.push(finish(p));
                }
                let text = strip_emphasis(&it).to_string();
                cur = Some(Pending {
                    location: text.clone(),
                    explicit: mods,
                    cause: cause.unwrap_or_else(|| text.clone()),
                    text,
                });
            }
        }
    }
    if let Some(p) = cur.take() {
        out.push(finish(p));
    }
    (out, none)
}

/// Parses and validates model output against the three-section schema.
pub fn parse_report(raw: &str) -> Result<StructuredReport> {
    let lines: Vec<&str> = raw.lines().collect();
    let mut starts: [Option<usize>; 3] = [None; 3];
    for (i, l) in lines.iter().enumerate() {
        if let Some(s) = header_text(l).and_then(|h| section_of(&h)) {
            starts[s].get_or_insert(i);
        }
    }
    for (s, title) in starts.iter().zip(SECTION_TITLES) {
        if s.is_none() {
            return Err(Error::MissingSection(title));
        }
    }
    let starts = starts.map(|s| s.unwrap());
    let body = |k: usize| -> &[&str] {
        let begin = starts[k] + 1;
        let end = starts.iter().copied().filter(|&s| s > starts[k]).min().unwrap_or(lines.len());
        &lines[begin..end]
    };
    let (s3_defects, s3_none_reported) = parse_s3(body(2));
    let report = StructuredReport {
        s1_findings: parse_s1(body(0)),
        s2_authenticity: parse_s2(body(1)),
        s3_defects,
        s3_none_reported,
        raw_text: raw.to_string(),
    };
    report.validate()?;
    Ok(report)
}
