//! Splitting model replies into labelled sections such as `Evidence:` and
//! `Answer:`.

/// Splits `text` into the bodies of `markers`, which must appear in order at
/// the start of a line (case-insensitive, optional markdown emphasis). Text on
/// the marker line after the colon belongs to that section. Anything before
/// the first marker is ignored.
pub(crate) fn split_sections(text: &str, markers: &[&str]) -> Result<Vec<String>, String> {
    let mut bodies: Vec<Vec<&str>> = Vec::with_capacity(markers.len());
    for line in text.lines() {
        if let Some(next) = markers.get(bodies.len()) {
            if let Some(rest) = strip_marker(line, next) {
                bodies.push(vec![rest]);
                continue;
            }
        }
        if let Some(current) = bodies.last_mut() {
            current.push(line);
        }
    }
    if bodies.len() < markers.len() {
        return Err(format!("missing '{}:' section", markers[bodies.len()]));
    }
    Ok(bodies.into_iter().map(|lines| lines.join("\n").trim().to_string()).collect())
}

fn strip_marker<'t>(line: &'t str, marker: &str) -> Option<&'t str> {
    let t = line.trim_start().trim_start_matches(['#', '*', ' ']);
    let head = t.get(..marker.len())?;
    if !head.eq_ignore_ascii_case(marker) {
        return None;
    }
    let rest = t[marker.len()..].trim_start_matches('*').strip_prefix(':')?;
    Some(rest.trim_start_matches('*').trim())
}

/// Non-empty lines of a section with one leading bullet (`-`, `*`, `•`) or
/// number (`1.`, `1)`) removed.
pub(crate) fn list_items(body: &str) -> Vec<String> {
    body.lines()
        .map(|l| strip_one_marker(l.trim()).trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

fn strip_one_marker(t: &str) -> &str {
    for bullet in ["- ", "* ", "• "] {
        if let Some(rest) = t.strip_prefix(bullet) {
            return rest;
        }
    }
    if t == "-" || t == "*" || t == "•" {
        return "";
    }
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r;
        }
    }
    t
}

/// First non-empty line of a section.
pub(crate) fn first_line(body: &str) -> String {
    body.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or_default().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_in_order() {
        let text = "Sure.\n**Evidence:**\n- a\nReasoning: inline\n2. b\nAnswer: x\n";
        let s = split_sections(text, &["Evidence", "Reasoning", "Answer"]).unwrap();
        assert_eq!(s, vec!["- a", "inline\n2. b", "x"]);
    }

    #[test]
    fn missing_or_out_of_order_marker() {
        let err = split_sections("Evidence:\n- a\nAnswer: x", &["Evidence", "Reasoning", "Answer"]).unwrap_err();
        assert!(err.contains("Reasoning"));
        assert!(split_sections("Answer: x\nEvidence: a\nReasoning: b", &["Evidence", "Reasoning", "Answer"]).is_err());
    }

    #[test]
    fn list_items_strip_one_marker() {
        assert_eq!(list_items("- a\n\n1. b\n2) c\n- - d\nplain"), vec!["a", "b", "c", "- d", "plain"]);
        assert_eq!(list_items("-3 degrees"), vec!["-3 degrees"]);
    }
}
