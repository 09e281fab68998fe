use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{question_table_key, FilterGenerator, GenFailure, GeneratedTool};
use crate::filter::{fuzz, render_predicate, CmpOp, Expr, Func};
use crate::table::Table;

/// Emits seeded random predicates over the table's columns.
///
/// The output mixes plausible filters with ones that fail at run time
/// (missing columns, casts of text cells, impossible matches), which makes it
/// a worst-case generator for exercising revert handling.
#[derive(Debug, Clone)]
pub struct RandomPredicateGenerator {
    seed: u64,
}

impl RandomPredicateGenerator {
    pub fn new(seed: u64) -> Self {
        RandomPredicateGenerator { seed }
    }

    fn predicate(&self, rng: &mut ChaCha8Rng, table: &Table) -> Expr {
        let col = |rng: &mut ChaCha8Rng| {
            let idx = rng.random_range(0..table.num_columns());
            Expr::Column(table.columns()[idx].clone())
        };
        let cell_sample = |rng: &mut ChaCha8Rng| -> String {
            if table.num_rows() == 0 {
                return "x".into();
            }
            let row = &table.rows()[rng.random_range(0..table.num_rows())];
            let cell = &row[rng.random_range(0..row.len())];
            let chars: Vec<char> = cell.to_lowercase().chars().collect();
            if chars.is_empty() {
                return String::new();
            }
            let start = rng.random_range(0..chars.len());
            let end = rng.random_range(start..=chars.len());
            chars[start..end].iter().collect()
        };
        match rng.random_range(0..6) {
            0 => {
                let needle = cell_sample(rng);
                Expr::contains(Expr::Str(needle), Expr::call(Func::Lower, col(rng)))
            }
            1 => {
                let op = CmpOp::ALL[rng.random_range(0..CmpOp::ALL.len())];
                let threshold = rng.random_range(-10..200) as f64;
                Expr::compare(op, Expr::call(Func::Float, col(rng)), Expr::Num(threshold))
            }
            2 => Expr::compare(CmpOp::Eq, col(rng), Expr::str("no such value")),
            3 => Expr::compare(CmpOp::Eq, Expr::column("no such column"), Expr::str("x")),
            4 => {
                let a = self.predicate(rng, table);
                let b = self.predicate(rng, table);
                if rng.random_bool(0.5) {
                    Expr::and(a, b)
                } else {
                    Expr::or(a, b)
                }
            }
            _ => fuzz::random_expr(rng, 3),
        }
    }
}

impl FilterGenerator for RandomPredicateGenerator {
    fn backend(&self) -> &str {
        "adversarial"
    }

    fn generate(&self, question: &str, table: &Table) -> Result<GeneratedTool, GenFailure> {
        let key = question_table_key(question, table);
        let mut seed_bytes = [0u8; 8];
        seed_bytes.copy_from_slice(&hex::decode(&key[..16]).expect("hex key"));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ u64::from_le_bytes(seed_bytes));
        let predicate = self.predicate(&mut rng, table);
        Ok(GeneratedTool {
            raw_completion: render_predicate(&predicate),
            predicate,
            source: self.backend().to_string(),
            question_table_key: key,
        })
    }
}
