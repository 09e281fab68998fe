//! Load a WikiTableQuestions-style layout and carve out the filter subset.
//!
//! cargo run --example load_wtq [-- <dataset.tsv> <root>]

use std::fs;
use std::path::{Path, PathBuf};

use tabtool::eval::{build_filter_subset, load_wtq, SqlAnnotation};
use tabtool::filter::render_predicate;

fn fixture(root: &Path) -> PathBuf {
    fs::create_dir_all(root.join("csv/203-csv")).unwrap();
    fs::create_dir_all(root.join("data")).unwrap();
    fs::write(
        root.join("csv/203-csv/733.csv"),
        "\"Year\",\"Division\",\"League\",\"Open Cup\"\n\
         \"2001\",\"2\",\"USL A-League\",\"4th Round\"\n\
         \"2002\",\"2\",\"USL A-League\",\"Quarterfinals\"\n\
         \"2005\",\"2\",\"USL First Division\",\"4th Round\"\n",
    )
    .unwrap();
    let tsv = root.join("data/sample.tsv");
    fs::write(
        &tsv,
        "id\tutterance\tcontext\ttargetValue\n\
         nt-0\twhat was the league in 2005?\tcsv/203-csv/733.csv\tUSL First Division\n\
         nt-1\twhich years reached the 4th round?\tcsv/203-csv/733.csv\t2001|2005\n\
         nt-2\thow many seasons are listed?\tcsv/203-csv/733.csv\t3\n\
         nt-3\tbroken reference\tcsv/203-csv/000.csv\t0\n",
    )
    .unwrap();
    tsv
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let tmp = tempfile::tempdir().unwrap();
    let (tsv, root) = match args.as_slice() {
        [tsv, root] => (PathBuf::from(tsv), PathBuf::from(root)),
        _ => (fixture(tmp.path()), tmp.path().to_path_buf()),
    };

    let report = load_wtq(&tsv, &root).unwrap();
    println!("loaded {} instances, skipped {}", report.instances.len(), report.skipped);
    for e in &report.errors {
        println!("  skip: {e}");
    }
    for inst in &report.instances {
        println!("  {} {:?} -> {:?} ({} rows)", inst.id, inst.question, inst.gold_answers, inst.table.num_rows());
    }

    let annotations = vec![
        SqlAnnotation { id: "nt-0".into(), sql: "select c3 from w where c1_number = 2005".into() },
        SqlAnnotation { id: "nt-1".into(), sql: "select c1 from w where c4 = '4th round'".into() },
        SqlAnnotation { id: "nt-2".into(), sql: "select count(*) from w".into() },
    ];
    let subset = build_filter_subset(&report.instances, &annotations);
    println!(
        "filter subset: {} kept, {} excluded, {} untranslatable, {} unannotated",
        subset.instances.len(),
        subset.excluded,
        subset.untranslatable.len(),
        subset.unannotated
    );
    for inst in &subset.instances {
        match &inst.gold_predicate {
            Some(p) => println!("  {} gold filter: {}", inst.id, render_predicate(p)),
            None => println!("  {} kept without a filter", inst.id),
        }
    }
}
