use super::{BoundedQuery, OracleConfig, Transcript};
use crate::error::{Error, Result};

/// Anything that answers statistical queries.
pub trait Oracle {
    fn respond(&mut self, query: &BoundedQuery) -> Result<f64>;

    fn respond_batch(&mut self, queries: &[BoundedQuery]) -> Result<Vec<f64>> {
        queries.iter().map(|q| self.respond(q)).collect()
    }
}

impl<O: Oracle + ?Sized> Oracle for &mut O {
    fn respond(&mut self, query: &BoundedQuery) -> Result<f64> {
        (**self).respond(query)
    }

    fn respond_batch(&mut self, queries: &[BoundedQuery]) -> Result<Vec<f64>> {
        (**self).respond_batch(queries)
    }
}

/// The only channel through which an algorithm sees data. Every answered query is
/// logged and the budget is enforced.
pub struct Session<'a> {
    oracle: &'a mut dyn Oracle,
    budget: usize,
    transcript: Transcript,
}

impl<'a> Session<'a> {
    pub fn new(oracle: &'a mut dyn Oracle, budget: usize) -> Self {
        Session { oracle, budget, transcript: Transcript::new() }
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.transcript.len()
    }

    pub fn ask(&mut self, query: &BoundedQuery) -> Result<f64> {
        if self.remaining() == 0 {
            return Err(Error::BudgetExhausted { budget: self.budget });
        }
        let z = self.oracle.respond(query)?;
        self.transcript.push(query.shared_id(), z);
        Ok(z)
    }

    /// Asks every query in order. Queries past the budget are not answered and the
    /// call fails with `BudgetExhausted`.
    pub fn ask_all(&mut self, queries: &[BoundedQuery]) -> Result<Vec<f64>> {
        let fit = queries.len().min(self.remaining());
        let answers = self.oracle.respond_batch(&queries[..fit])?;
        for (q, &z) in queries[..fit].iter().zip(&answers) {
            self.transcript.push(q.shared_id(), z);
        }
        if fit < queries.len() {
            return Err(Error::BudgetExhausted { budget: self.budget });
        }
        Ok(answers)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }
}

/// An SQ algorithm: it may only look at data through a [`Session`].
pub trait SqAlgorithm {
    type Output;

    fn execute(&self, session: &mut Session<'_>) -> Result<Self::Output>;
}

impl<A: SqAlgorithm + ?Sized> SqAlgorithm for &A {
    type Output = A::Output;

    fn execute(&self, session: &mut Session<'_>) -> Result<Self::Output> {
        (**self).execute(session)
    }
}

/// Closure-backed algorithm.
pub struct FnAlgorithm<F>(pub F);

impl<F, O> SqAlgorithm for FnAlgorithm<F>
where
    F: Fn(&mut Session<'_>) -> Result<O>,
{
    type Output = O;

    fn execute(&self, session: &mut Session<'_>) -> Result<O> {
        (self.0)(session)
    }
}

#[derive(Debug, Clone)]
pub struct Run<T> {
    pub output: T,
    pub transcript: Transcript,
}

/// Runs `algorithm` against `oracle` under the budget `config.budget`.
pub fn run_algorithm<A: SqAlgorithm + ?Sized>(
    algorithm: &A,
    oracle: &mut dyn Oracle,
    config: &OracleConfig,
) -> Result<Run<A::Output>> {
    config.validate()?;
    let mut session = Session::new(oracle, config.budget);
    let output = algorithm.execute(&mut session)?;
    Ok(Run { output, transcript: session.into_transcript() })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Const(f64);
    impl Oracle for Const {
        fn respond(&mut self, _: &BoundedQuery) -> Result<f64> {
            Ok(self.0)
        }
    }

    fn q(i: usize) -> BoundedQuery {
        BoundedQuery::custom(format!("q{i}"), 1.0, |_| 0.0).unwrap()
    }

    #[test]
    fn empty_and_budget() {
        let cfg = OracleConfig::new(0.1, 10, 3, 0.0).unwrap();
        let none = FnAlgorithm(|_: &mut Session<'_>| Ok(()));
        assert!(run_algorithm(&none, &mut Const(0.5), &cfg).unwrap().transcript.is_empty());

        let four = FnAlgorithm(|s: &mut Session<'_>| {
            for i in 0..4 {
                s.ask(&q(i))?;
            }
            Ok(())
        });
        assert_eq!(run_algorithm(&four, &mut Const(0.5), &cfg).unwrap_err(), Error::BudgetExhausted { budget: 3 });

        let batch = FnAlgorithm(|s: &mut Session<'_>| s.ask_all(&(0..4).map(q).collect::<Vec<_>>()));
        assert!(matches!(run_algorithm(&batch, &mut Const(0.5), &cfg), Err(Error::BudgetExhausted { .. })));
    }

    #[test]
    fn transcript_records_in_order() {
        let cfg = OracleConfig::new(0.1, 10, 3, 0.0).unwrap();
        let alg = FnAlgorithm(|s: &mut Session<'_>| {
            let a = s.ask(&q(0))?;
            let b = s.ask(&q(1))?;
            Ok(a + b)
        });
        let run = run_algorithm(&alg, &mut Const(0.25), &cfg).unwrap();
        assert_eq!(run.output, 0.5);
        let ids: Vec<&str> = run.transcript.entries().iter().map(|e| &*e.id).collect();
        assert_eq!(ids, ["q0", "q1"]);
        assert_eq!(run.transcript.budget_used(), 2);
    }
}
