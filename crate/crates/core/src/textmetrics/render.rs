use super::{extract_facts, Trend};
use crate::error::Result;
use crate::policy::{TokenGroup, TokenSequence, Vocabulary};

const THROUGHPUT_VERBS: [&str; 3] = ["averaged", "reached", "came to"];
const DELAY_NOUNS: [&str; 3] = ["delay", "latency", "packet delay"];
const TREND_NOUNS: [&str; 3] = ["trend", "trajectory", "tendency"];

fn flag_phrase(high: bool, above: &str, below: &str) -> String {
    if high { above } else { below }.to_string()
}

/// Human-readable text of an in-grammar report. The template and synonym
/// tokens choose the phrasing; the facts fill it in.
pub fn render_report_text(vocab: &Vocabulary, report: &TokenSequence) -> Result<String> {
    let f = extract_facts(vocab, report)?;
    let idx = report.indices();
    let rank = |pos: usize, g: TokenGroup| vocab.rank_in_group(g, idx[pos]).unwrap_or(0);
    let template = rank(0, TokenGroup::Template);
    let verb = THROUGHPUT_VERBS[rank(1, TokenGroup::Synonym(0)).min(2)];
    let delay = DELAY_NOUNS[rank(2, TokenGroup::Synonym(1)).min(2)];
    let trend_noun = TREND_NOUNS[rank(3, TokenGroup::Synonym(2)).min(2)];
    let thr = format!("{:.1} Mbps", f64::from(f.throughput_bucket) / 10.0);
    let dly = format!("{:.1} ms", f64::from(f.delay_bucket) / 10.0);
    let thr_flag = flag_phrase(f.throughput_high, "mostly above 5 Mbps", "mostly below 5 Mbps");
    let dly_flag = flag_phrase(f.delay_high, "mostly above 15 ms", "mostly below 15 ms");
    let trend = match f.trend {
        Trend::Stable => "stable".to_string(),
        t => t.word().to_string(),
    };
    let sched = f.scheduler.name();
    Ok(match template {
        0 => format!(
            "With the {sched} scheduler, per-UE throughput {verb} {thr} ({thr_flag}) and mean {delay} was {dly} ({dly_flag}); the {delay} {trend_noun} was {trend}."
        ),
        1 => format!(
            "{sched} run: throughput {verb} {thr}, {delay} {dly}. Throughput was {thr_flag}, {delay} {dly_flag}, with a {trend} {trend_noun}."
        ),
        2 => format!(
            "Mean {delay} of {dly} ({dly_flag}, {trend_noun} {trend}) while throughput {verb} {thr} ({thr_flag}) under {sched}."
        ),
        _ => format!(
            "Summary for {sched}: throughput {thr} ({thr_flag}), {delay} {dly} ({dly_flag}), {trend_noun}: {trend}."
        ),
    })
}
