//! Line-oriented pass/fail reporting.

use std::io::Write;
use std::time::Instant;

pub struct Criterion {
    pub id: &'static str,
    pub title: &'static str,
    started: Instant,
    passed: usize,
    failed: usize,
}

impl Criterion {
    pub fn start(id: &'static str, title: &'static str) -> Self {
        println!("---- {id}: {title}");
        flush();
        Criterion {
            id,
            title,
            started: Instant::now(),
            passed: 0,
            failed: 0,
        }
    }

    pub fn check(&mut self, pass: bool, what: impl AsRef<str>) -> bool {
        if pass {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        println!(
            "     {} {}",
            if pass { "ok  " } else { "FAIL" },
            what.as_ref()
        );
        flush();
        pass
    }

    /// `|got - want| <= tol`
    pub fn near(&mut self, what: impl AsRef<str>, got: f64, want: f64, tol: f64) -> bool {
        let pass = (got - want).abs() <= tol;
        self.check(
            pass,
            format!(
                "{}: got {got:.6}, want {want} ± {tol} (off by {:.2e})",
                what.as_ref(),
                (got - want).abs()
            ),
        )
    }

    /// `|got/want - 1| <= rel`
    pub fn near_rel(&mut self, what: impl AsRef<str>, got: f64, want: f64, rel: f64) -> bool {
        let off = (got / want - 1.0).abs();
        self.check(
            off <= rel,
            format!(
                "{}: got {got:.6e}, want {want:e} ± {:.1}% (off by {:.2}%)",
                what.as_ref(),
                100.0 * rel,
                100.0 * off
            ),
        )
    }

    /// Records an error that prevented a check from running.
    pub fn error(&mut self, what: impl AsRef<str>, err: impl std::fmt::Display) {
        self.check(false, format!("{}: error: {err}", what.as_ref()));
    }

    pub fn note(&self, text: impl AsRef<str>) {
        println!("     note {}", text.as_ref());
        flush();
    }

    pub fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    pub fn finish(self) -> Outcome {
        let pass = self.failed == 0 && self.passed > 0;
        println!(
            "{} {}: {} ({}/{} checks, {:.1} s)",
            if pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.passed,
            self.passed + self.failed,
            self.elapsed()
        );
        flush();
        Outcome { id: self.id, pass }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub id: &'static str,
    pub pass: bool,
}

fn flush() {
    let _ = std::io::stdout().flush();
}
