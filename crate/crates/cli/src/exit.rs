//! Process exit codes: 0 success, 2 usage, 3 data or contract, 4 numerical.

use thiserror::Error;

pub const USAGE: i32 = 2;
pub const DATA: i32 = 3;
pub const NUMERICAL: i32 = 4;

/// A well-formed command line that asks for something impossible.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Exit code for an error chain; the first classifiable cause wins.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if let Some(regionplsa::Error::Numerical(_)) = cause.downcast_ref::<regionplsa::Error>() {
            return NUMERICAL;
        }
    }
    DATA
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn codes_follow_the_cause() {
        let num: anyhow::Result<()> = Err(regionplsa::Error::Numerical("-inf".into())).context("training");
        assert_eq!(exit_code(&num.unwrap_err()), NUMERICAL);
        let usage = anyhow::Error::new(UsageError("no input".into()));
        assert_eq!(exit_code(&usage), USAGE);
        assert_eq!(exit_code(&anyhow::anyhow!("bad manifest")), DATA);
    }
}
