use std::sync::LazyLock;

use rand::seq::IndexedRandom;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::envsim::Scheduler;
use crate::error::{Error, Result};
use crate::policy::PromptSlots;
use crate::rng::derived;

/// A rendered operator intent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptSpec {
    pub text: String,
    pub slots: PromptSlots,
    pub style_seed: u64,
}

/// Requested changes to a prompt. `None` leaves a slot as it is.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheduler: Option<Scheduler>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_ues: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_mbps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_seed: Option<u64>,
}

/// (opening, closing) around the clause list.
const TEMPLATES: [(&str, &str); 8] = [
    ("Run with ", "."),
    ("Please simulate ", "."),
    ("I want to test ", "."),
    ("Set up an experiment with ", "."),
    ("Can you simulate ", "?"),
    ("Evaluate the cell using ", "."),
    ("Configure the scheduler for ", " and report the KPIs."),
    ("Let's try ", "."),
];

const DEFAULT_CLAUSE: &str = "the default settings";

const NUMBER_WORDS: [&str; 11] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

fn scheduler_names(s: Scheduler) -> &'static [&'static str] {
    match s {
        Scheduler::Rr => &["round robin", "round-robin", "RR"],
        Scheduler::Pf => &["proportional fair", "proportional-fair", "PF"],
    }
}

const SCHEDULER_FORMS: [&str; 3] = ["the {} scheduler", "{} scheduling", "a {} scheduler"];
const UE_FORMS: [&str; 4] = ["{w} users", "{n} UEs", "{n} user equipments", "{w} devices"];
const LOAD_FORMS: [&str; 4] = [
    "{} Mbps per user",
    "a per-UE load of {} Mbps",
    "{} Mbit/s of traffic per UE",
    "an offered load of {} Mbps each",
];
const DURATION_FORMS: [&str; 4] = ["for {} seconds", "over {} s", "lasting {} seconds", "a duration of {} s"];

fn join_clauses(clauses: &[String]) -> String {
    match clauses {
        [] => DEFAULT_CLAUSE.to_string(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Deterministic text for `slots`; `style_seed` picks the template and
/// every phrasing choice.
pub fn render_prompt(slots: &PromptSlots, style_seed: u64) -> Result<PromptSpec> {
    slots.validate()?;
    let mut rng = derived(style_seed, "prompt-style", 0);
    let (open, close) = *TEMPLATES.choose(&mut rng).expect("non-empty");
    let mut clauses = Vec::new();
    if let Some(s) = slots.scheduler {
        let name = scheduler_names(s).choose(&mut rng).expect("non-empty");
        clauses.push(SCHEDULER_FORMS.choose(&mut rng).expect("non-empty").replace("{}", name));
    }
    if let Some(n) = slots.num_ues {
        let form = UE_FORMS.choose(&mut rng).expect("non-empty");
        clauses.push(
            form.replace("{w}", NUMBER_WORDS[n as usize])
                .replace("{n}", &n.to_string()),
        );
    }
    if let Some(l) = slots.load_mbps {
        clauses.push(LOAD_FORMS.choose(&mut rng).expect("non-empty").replace("{}", &l.to_string()));
    }
    if let Some(d) = slots.duration_s {
        clauses.push(DURATION_FORMS.choose(&mut rng).expect("non-empty").replace("{}", &d.to_string()));
    }
    Ok(PromptSpec {
        text: format!("{open}{}{close}", join_clauses(&clauses)),
        slots: *slots,
        style_seed,
    })
}

static SCHED_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(?:the |a )?(round[- ]robin|rr|proportional[- ]fair|pf)(?: scheduler| scheduling)$").unwrap()
});
static UE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(\d+|[a-z]+) (?:users|ues|user equipments|devices)$").unwrap());
static LOAD_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^(?:(\d+) mbps per user|a per-ue load of (\d+) mbps|(\d+) mbit/s of traffic per ue|an offered load of (\d+) mbps each)$",
    )
    .unwrap()
});
static DURATION_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(?:for (\d+) seconds|over (\d+) s|lasting (\d+) seconds|a duration of (\d+) s)$").unwrap()
});
static SPLIT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r",\s*|\s+and\s+").unwrap());

fn first_group<'t>(c: &regex::Captures<'t>) -> &'t str {
    c.iter().skip(1).flatten().next().map_or("", |m| m.as_str())
}

fn number(fragment: &str, raw: &str) -> Result<u32> {
    if let Ok(n) = raw.parse() {
        return Ok(n);
    }
    NUMBER_WORDS
        .iter()
        .position(|w| w.eq_ignore_ascii_case(raw))
        .map(|n| n as u32)
        .ok_or_else(|| Error::parse(fragment, "not a number"))
}

fn in_range(fragment: &str, v: u32, lo: u32, hi: u32, what: &str) -> Result<u32> {
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(Error::parse(fragment, format!("{what} {v} is outside [{lo}, {hi}]")))
    }
}

fn parse_clause(clause: &str, slots: &mut PromptSlots) -> Result<()> {
    let dup = |fragment: &str| Error::parse(fragment, "slot given twice");
    if let Some(c) = SCHED_RE.captures(clause) {
        let s: Scheduler = c[1].replace('-', " ").parse()?;
        if slots.scheduler.replace(s).is_some() {
            return Err(dup(clause));
        }
    } else if let Some(c) = UE_RE.captures(clause) {
        let n = in_range(clause, number(clause, &c[1])?, 3, 10, "UE count")?;
        if slots.num_ues.replace(n).is_some() {
            return Err(dup(clause));
        }
    } else if let Some(c) = LOAD_RE.captures(clause) {
        let v = in_range(clause, number(clause, first_group(&c))?, 2, 10, "load (Mbps)")?;
        if slots.load_mbps.replace(v).is_some() {
            return Err(dup(clause));
        }
    } else if let Some(c) = DURATION_RE.captures(clause) {
        let v = in_range(clause, number(clause, first_group(&c))?, 5, 10, "duration (s)")?;
        if slots.duration_s.replace(v).is_some() {
            return Err(dup(clause));
        }
    } else {
        return Err(Error::parse(clause, "unrecognised clause"));
    }
    Ok(())
}

/// Recovers the slots from text produced by [`render_prompt`].
pub fn parse_prompt(text: &str) -> Result<PromptSlots> {
    let trimmed = text.trim();
    let lower = trimmed.to_ascii_lowercase();
    for (open, close) in TEMPLATES {
        if !lower.starts_with(&open.to_ascii_lowercase()) {
            continue;
        }
        let rest = &trimmed[open.len()..];
        let close_trim = close.trim_end_matches(['.', '?']);
        let body = rest.trim_end_matches(['.', '?', '!']).trim_end();
        let body = if close_trim.is_empty() {
            body
        } else if body.to_ascii_lowercase().ends_with(&close_trim.to_ascii_lowercase()) {
            &body[..body.len() - close_trim.len()]
        } else {
            continue;
        };
        let mut slots = PromptSlots::default();
        if body.trim().eq_ignore_ascii_case(DEFAULT_CLAUSE) {
            return Ok(slots);
        }
        for clause in SPLIT_RE.split(body.trim()) {
            parse_clause(clause.trim(), &mut slots)?;
        }
        return Ok(slots);
    }
    Err(Error::parse(trimmed, "does not match any prompt template"))
}

impl PromptSpec {
    /// Parses free text (which must follow a known template) into a spec.
    pub fn from_text(text: &str) -> Result<Self> {
        Ok(Self {
            slots: parse_prompt(text)?,
            text: text.trim().to_string(),
            style_seed: 0,
        })
    }
}

/// Applies `edit` to `x` and re-renders the result.
pub fn edit_prompt(x: &PromptSpec, edit: &EditSpec) -> Result<PromptSpec> {
    let slots = PromptSlots {
        scheduler: edit.scheduler.or(x.slots.scheduler),
        num_ues: edit.num_ues.or(x.slots.num_ues),
        load_mbps: edit.load_mbps.or(x.slots.load_mbps),
        duration_s: edit.duration_s.or(x.slots.duration_s),
    };
    slots.validate()?;
    let changed = slots.differing_slots(&x.slots);
    if changed > 2 {
        return Err(Error::invalid(format!("edit changes {changed} slots; at most 2 are allowed")));
    }
    let style_seed = edit.style_seed.unwrap_or(x.style_seed);
    if changed == 0 && style_seed == x.style_seed {
        return Err(Error::invalid("edit changes neither a slot nor the phrasing"));
    }
    render_prompt(&slots, style_seed)
}

/// Membership in the edit set: one or two slots differ, or only the
/// phrasing does.
pub fn is_admissible_edit(x: &PromptSpec, x_prime: &PromptSpec) -> bool {
    let changed = x.slots.differing_slots(&x_prime.slots);
    x_prime.slots.validate().is_ok()
        && parse_prompt(&x_prime.text).is_ok_and(|s| s == x_prime.slots)
        && (changed == 1 || changed == 2 || (changed == 0 && x.text != x_prime.text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mentions_all_slots() {
        let slots = PromptSlots::full(Scheduler::Pf, 8, 5, 10);
        let mut seen_words = false;
        for seed in 0..40 {
            let p = render_prompt(&slots, seed).unwrap();
            let t = p.text.to_lowercase();
            assert!(t.contains("proportional") || t.contains("pf"), "{t}");
            assert!(t.contains("eight") || t.contains('8'), "{t}");
            assert!(t.contains("5 mb"), "{t}");
            assert!(t.contains("10 s"), "{t}");
            seen_words |= t.contains("eight users") && t.contains("proportional fair");
            assert_eq!(parse_prompt(&p.text).unwrap(), slots);
        }
        assert!(seen_words);
    }

    #[test]
    fn out_of_grammar_inputs() {
        let err = parse_prompt("run with 50 users").unwrap_err();
        assert!(matches!(&err, Error::Parse { fragment, .. } if fragment == "50 users"), "{err}");
        assert!(parse_prompt("make it fast").is_err());
        assert!(matches!(
            parse_prompt("Run with 8 users and some magic."),
            Err(Error::Parse { fragment, .. }) if fragment == "some magic"
        ));
        assert!(parse_prompt("Run with 8 users and 9 devices.").is_err());
    }

    #[test]
    fn defaults_and_partial_slots() {
        let p = render_prompt(&PromptSlots::default(), 3).unwrap();
        assert!(p.text.contains(DEFAULT_CLAUSE));
        assert_eq!(parse_prompt(&p.text).unwrap(), PromptSlots::default());
        let partial = PromptSlots {
            num_ues: Some(4),
            duration_s: Some(7),
            ..Default::default()
        };
        assert_eq!(parse_prompt(&render_prompt(&partial, 9).unwrap().text).unwrap(), partial);
    }

    #[test]
    fn edits() {
        let x = render_prompt(&PromptSlots::full(Scheduler::Rr, 4, 5, 7), 1).unwrap();
        let pf = edit_prompt(&x, &EditSpec { scheduler: Some(Scheduler::Pf), ..Default::default() }).unwrap();
        assert_eq!(pf.slots, PromptSlots::full(Scheduler::Pf, 4, 5, 7));
        assert!(is_admissible_edit(&x, &pf));
        assert!(edit_prompt(&x, &EditSpec { load_mbps: Some(11), ..Default::default() }).is_err());
        assert!(edit_prompt(&x, &EditSpec::default()).is_err());
        let three = EditSpec {
            scheduler: Some(Scheduler::Pf),
            num_ues: Some(9),
            load_mbps: Some(3),
            ..Default::default()
        };
        assert!(edit_prompt(&x, &three).is_err());
    }
}
