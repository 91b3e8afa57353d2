use proptest::prelude::*;
use xrprobe::reportprep::*;

const RAW: &str = include_str!("fixtures/reportprep/raw.jsonl");
const SHORT: &str = include_str!("fixtures/reportprep/short.jsonl");
const AUDIT: &str = include_str!("fixtures/reportprep/audit.jsonl");

fn v(s: &[&str]) -> Vec<String> {
    s.iter().map(|x| x.to_string()).collect()
}

fn run_golden() -> (String, String) {
    let raw = parse_raw_jsonl(RAW).unwrap();
    assert_eq!(raw.len(), 20);
    let (short, audit): (Vec<_>, Vec<_>) = raw.iter().map(|r| process_report(r, &DEFAULT_KEYWORDS).unwrap()).unzip();
    let flagged: Vec<_> = audit.into_iter().filter(|a| !a.is_clean()).collect();
    (to_jsonl(&short), to_jsonl(&flagged))
}

#[test]
fn golden_short_reports_are_byte_exact() {
    let (short, _) = run_golden();
    for (got, want) in short.lines().zip(SHORT.lines()) {
        assert_eq!(got, want);
    }
    assert_eq!(short, SHORT);
}

#[test]
fn golden_audit_is_byte_exact() {
    assert_eq!(run_golden().1, AUDIT);
}

#[test]
fn golden_output_is_deterministic() {
    assert_eq!(run_golden(), run_golden());
}

#[test]
fn extraction_examples() {
    assert_eq!(extract_main_content("Tech notes. FINDINGS: Heart size normal.", &DEFAULT_KEYWORDS).content, "Heart size normal.");
    let plain = extract_main_content("Lungs clear.", &DEFAULT_KEYWORDS);
    assert_eq!((plain.content.as_str(), plain.keyword), ("Lungs clear.", None));
    assert_eq!(extract_main_content("REPORT:\n\n", &DEFAULT_KEYWORDS).content, "");
    assert_eq!(extract_main_content("IMPRESSION: ok", &["impression"]).content, "ok");
}

#[test]
fn segmentation_examples() {
    assert_eq!(clean_and_segment("Heart size normal. Lungs clear."), v(&["Heart size normal.", "Lungs clear."]));
    assert_eq!(clean_and_segment("Measures 3.5 cm."), v(&["Measures 3.5 cm."]));
    assert_eq!(clean_and_segment("____ XR CHEST ____ Normal."), v(&["Normal."]));
    assert_eq!(clean_and_segment("e.g. Two views. I.e. Three."), v(&["e.g. Two views.", "I.e. Three."]));
}

#[test]
fn merge_examples() {
    assert_eq!(filter_and_merge(&v(&["Clear.", "Heart size normal."])), (v(&["Heart size normal."]), v(&["Clear."])));
    assert_eq!(filter_and_merge(&v(&["Heart size normal.", "Clear."])).0, v(&["Heart size normal. Clear."]));
    assert_eq!(filter_and_merge(&v(&["A.", "B c."])), (vec![], v(&["A.", "B c."])));
}

#[test]
fn pairing_examples() {
    assert_eq!(make_short_reports(&v(&["a", "b", "c", "d"])), v(&["a b", "c d"]));
    assert_eq!(make_short_reports(&v(&["a", "b", "c"])), v(&["a b", "c"]));
    assert!(make_short_reports(&[]).is_empty());
}

#[test]
fn blank_report_is_an_error() {
    let raw = RawReport { id: "x".into(), text: " \n ".into() };
    assert_eq!(process_report(&raw, &DEFAULT_KEYWORDS), Err(ReportError::Empty("x".into())));
    assert!(matches!(parse_raw_jsonl("{\"id\":1}\n"), Err(ReportError::Parse { line: 1, .. })));
}

fn sentence() -> impl Strategy<Value = String> {
    (prop::sample::select(vec!["Heart", "Lungs", "The", "No", "Mild"]), prop::collection::vec("[a-z]{1,8}", 0..6), prop::sample::select(vec![".", "!", "?"]))
        .prop_map(|(first, rest, end)| {
            let mut s = first.to_string();
            for w in rest {
                s.push(' ');
                s.push_str(&w);
            }
            s + end
        })
}

proptest! {
    #[test]
    fn segmentation_is_idempotent(sents in prop::collection::vec(sentence(), 1..8)) {
        let once = clean_and_segment(&sents.join(" "));
        let again: Vec<String> = once.iter().flat_map(|s| clean_and_segment(s)).collect();
        prop_assert_eq!(clean_and_segment(&once.join(" ")), once.clone());
        prop_assert_eq!(again, once);
    }

    #[test]
    fn merging_conserves_tokens(sents in prop::collection::vec(sentence(), 0..10)) {
        let (kept, dropped) = filter_and_merge(&sents);
        let count = |v: &[String]| v.iter().map(|s| s.split_whitespace().count()).sum::<usize>();
        prop_assert_eq!(count(&kept) + count(&dropped), count(&sents));
        prop_assert!(kept.iter().all(|s| s.split_whitespace().count() >= MIN_TOKENS));
        let units = make_short_reports(&kept);
        prop_assert_eq!(units.len(), kept.len().div_ceil(2));
    }
}
