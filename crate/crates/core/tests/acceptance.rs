use willmore_core::verify;

#[test]
fn acceptance_criteria() {
    let mut failed = Vec::new();
    let only: Option<u8> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    for (id, _) in verify::CRITERIA.into_iter().filter(|c| only.is_none_or(|o| o == c.0)) {
        let r = verify::run(id).expect("known criterion");
        println!("{}  [{:.1}s]", r.line(), r.seconds);
        if !r.passed {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
