//! Integer-valued expressions such as `n/2` or `floor(sqrt(p))` used to
//! couple `p` and `s` to the sample size in experiment grids.

use evalexpr::{
    eval_with_context, ContextWithMutableFunctions, ContextWithMutableVariables, DefaultNumericTypes, Function,
    HashMapContext, Value,
};

use crate::error::{HarnessError, Result};

type Context = HashMapContext<DefaultNumericTypes>;

fn unary(f: fn(f64) -> f64) -> Function<DefaultNumericTypes> {
    Function::new(move |arg: &Value<DefaultNumericTypes>| Ok(Value::Float(f(arg.as_number()?))))
}

fn context(vars: &[(&str, usize)]) -> Result<Context> {
    let mut ctx = Context::new();
    let fns: [(&str, fn(f64) -> f64); 4] = [("sqrt", f64::sqrt), ("log", f64::ln), ("ln", f64::ln), ("exp", f64::exp)];
    for (name, f) in fns {
        ctx.set_function(name.into(), unary(f)).expect("context is mutable");
    }
    for &(name, v) in vars {
        ctx.set_value(name.into(), Value::Int(v as i64)).expect("context is mutable");
    }
    Ok(ctx)
}

/// Evaluates `rule` with the given integer variables. Integer arithmetic
/// truncates (`n/2` with `n = 5` is 2); a float result must be integral.
pub fn eval_rule(rule: &str, vars: &[(&str, usize)]) -> Result<usize> {
    let fail = |reason: String| HarnessError::Rule {
        rule: rule.to_string(),
        reason,
    };
    let ctx = context(vars)?;
    let value = eval_with_context(rule, &ctx).map_err(|e| fail(e.to_string()))?;
    let number = match value {
        Value::Int(i) => i as f64,
        Value::Float(f) => f,
        other => return Err(fail(format!("expected a number, got {other}"))),
    };
    let rounded = number.round();
    if !number.is_finite() || (number - rounded).abs() > 1e-9 {
        return Err(fail(format!("{number} is not an integer")));
    }
    if rounded < 0.0 {
        return Err(fail(format!("{number} is negative")));
    }
    Ok(rounded as usize)
}
