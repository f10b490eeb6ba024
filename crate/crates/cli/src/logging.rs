//! JSON-lines logging on stderr.

use std::io::Write;

use serde_json::{json, Value};

/// Installs the logger. Structured events are emitted as their own JSON
/// object; other messages are wrapped in one.
pub fn init(verbose: bool) {
    let default = if verbose { "debug" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default))
        .format(|buf, record| {
            let msg = record.args().to_string();
            let mut obj = match serde_json::from_str::<Value>(&msg) {
                Ok(Value::Object(o)) if record.target() == "ruinscan::event" => Value::Object(o),
                _ => json!({ "message": msg, "target": record.target() }),
            };
            if let Some(o) = obj.as_object_mut() {
                o.insert("level".into(), json!(record.level().as_str().to_ascii_lowercase()));
            }
            writeln!(buf, "{obj}")
        })
        .try_init();
}
