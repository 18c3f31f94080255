//! Scenario files bundled with the binary, addressable by name.

pub const NAMES: [&str; 7] = ["fig2e", "fig3a", "fig3b", "fig3c", "fig3d", "fig4", "fig5"];

pub fn get(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig2e" => include_str!("../presets/fig2e.toml"),
        "fig3a" => include_str!("../presets/fig3a.toml"),
        "fig3b" => include_str!("../presets/fig3b.toml"),
        "fig3c" => include_str!("../presets/fig3c.toml"),
        "fig3d" => include_str!("../presets/fig3d.toml"),
        "fig4" => include_str!("../presets/fig4.toml"),
        "fig5" => include_str!("../presets/fig5.toml"),
        _ => return None,
    })
}
