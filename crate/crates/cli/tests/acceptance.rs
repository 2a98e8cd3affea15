//! The acceptance gate: runs every verification check across all suites and
//! prints one pass/fail line per criterion. `wickamp verify all` runs the
//! same checks from the command line.

use wickamp::verify::{run_suite, Suite};

#[test]
fn acceptance_criteria() {
    let results = run_suite(Suite::All, None);
    assert_eq!(results.len(), 13, "all thirteen criteria must run");
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");

    // Stated runtime bound on the fixture count: well under a second.
    let fixture = results.iter().find(|r| r.id == 1).unwrap();
    assert!(fixture.seconds < 1.0, "fixture count took {:.2}s", fixture.seconds);
}
