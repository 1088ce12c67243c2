//! Structure-editor script emitter. Coordinates are in µm: x runs source to
//! drain, y across the sheet width, z up the stack.

use std::fmt::Write as _;

use super::{ensure_valid, header_bindings, DeckError, MeshDensity};
use crate::numfmt::fmt_num;
use crate::params::DesignParams;
use crate::surrogate::SD_LENGTH_NM;

/// HfO2 relative permittivity over SiO2 relative permittivity.
const HIGH_K_RATIO: f64 = 22.0 / 3.9;
/// Gate metal overhang beyond the oxide shell (nm).
const GATE_OVERHANG_NM: f64 = 3.0;

fn um(nm: f64) -> String {
    fmt_num(nm * 1e-3)
}

fn pos(x: f64, y: f64, z: f64) -> String {
    format!("(position {} {} {})", um(x), um(y), um(z))
}

fn cuboid(out: &mut String, lo: (f64, f64, f64), hi: (f64, f64, f64), material: &str, region: &str) {
    let _ = writeln!(
        out,
        "(sdegeo:create-cuboid {} {} \"{material}\" \"{region}\")",
        pos(lo.0, lo.1, lo.2),
        pos(hi.0, hi.1, hi.2)
    );
}

/// Emits the structure script for `params`. Identical inputs give identical bytes.
pub fn generate_sde(params: &DesignParams, mesh: MeshDensity) -> Result<String, DeckError> {
    ensure_valid(params)?;
    let p = params;
    let n = p.num_sheets as usize;
    let t_hk = p.eot * HIGH_K_RATIO;
    let stack_h = (n as f64 - 1.0) * p.vertical_pitch + p.sheet_thickness;
    let x_gate0 = SD_LENGTH_NM + p.spacer_length;
    let x_gate1 = x_gate0 + p.gate_length;
    let x_drain0 = x_gate1 + p.spacer_length;
    let x_end = x_drain0 + SD_LENGTH_NM;
    let g = t_hk + GATE_OVERHANG_NM;
    let (y_mid, z_mid) = (p.sheet_width / 2.0, p.sheet_thickness / 2.0);

    let mut s = String::new();
    let _ = writeln!(s, ";; Gate-all-around nanosheet FET structure");
    let _ = writeln!(s, ";; lengths in nm, doping in cm^-3, geometry coordinates in um");
    s.push_str(";; @section parameters\n");
    for (field, value) in header_bindings(p) {
        let _ = writeln!(s, "(define {} {value})", field.name());
    }

    s.push_str("\n;; @section regions\n");
    s.push_str("(sde:clear)\n(sdegeo:set-default-boolean \"ABA\")\n");
    cuboid(&mut s, (x_gate0, -g, -g), (x_gate1, p.sheet_width + g, stack_h + g), "TiN", "R.Gate");
    for k in 0..n {
        let z0 = k as f64 * p.vertical_pitch;
        cuboid(
            &mut s,
            (x_gate0, -t_hk, z0 - t_hk),
            (x_gate1, p.sheet_width + t_hk, z0 + p.sheet_thickness + t_hk),
            "HfO2",
            &format!("R.GateOx_{k}"),
        );
    }
    cuboid(&mut s, (SD_LENGTH_NM, -g, -g), (x_gate0, p.sheet_width + g, stack_h + g), "Si3N4", "R.Spacer_S");
    cuboid(&mut s, (x_gate1, -g, -g), (x_drain0, p.sheet_width + g, stack_h + g), "Si3N4", "R.Spacer_D");
    cuboid(&mut s, (0.0, 0.0, 0.0), (SD_LENGTH_NM, p.sheet_width, stack_h), "Silicon", "R.Source");
    cuboid(&mut s, (x_drain0, 0.0, 0.0), (x_end, p.sheet_width, stack_h), "Silicon", "R.Drain");
    for k in 0..n {
        let z0 = k as f64 * p.vertical_pitch;
        cuboid(
            &mut s,
            (SD_LENGTH_NM, 0.0, z0),
            (x_drain0, p.sheet_width, z0 + p.sheet_thickness),
            "Silicon",
            &format!("R.Channel_{k}"),
        );
    }

    s.push_str("\n;; @section doping\n");
    s.push_str("(sdedr:define-constant-profile \"P.Channel\" \"BoronActiveConcentration\" channel_doping)\n");
    for k in 0..n {
        let _ = writeln!(
            s,
            "(sdedr:define-constant-profile-region \"PR.Channel_{k}\" \"P.Channel\" \"R.Channel_{k}\")"
        );
    }
    s.push_str("(sdedr:define-constant-profile \"P.SD\" \"ArsenicActiveConcentration\" sd_doping)\n");
    s.push_str("(sdedr:define-constant-profile-region \"PR.Source\" \"P.SD\" \"R.Source\")\n");
    s.push_str("(sdedr:define-constant-profile-region \"PR.Drain\" \"P.SD\" \"R.Drain\")\n");

    s.push_str("\n;; @section contacts\n");
    for (name, rgb) in [("source", "1 0 0"), ("drain", "0 0 1"), ("gate", "0 1 0")] {
        let _ = writeln!(s, "(sdegeo:define-contact-set \"{name}\" 4 (color:rgb {rgb}) \"##\")");
    }
    let _ = writeln!(s, "(sdegeo:set-current-contact-set \"source\")");
    let _ = writeln!(s, "(sdegeo:set-contact-faces (find-face-id {}) \"source\")", pos(0.0, y_mid, z_mid));
    let _ = writeln!(s, "(sdegeo:set-current-contact-set \"drain\")");
    let _ = writeln!(s, "(sdegeo:set-contact-faces (find-face-id {}) \"drain\")", pos(x_end, y_mid, z_mid));
    let _ = writeln!(s, "(sdegeo:set-current-contact-set \"gate\")");
    let gate_probe = pos((x_gate0 + x_gate1) / 2.0, -g / 2.0 - t_hk / 2.0, z_mid);
    let _ = writeln!(s, "(sdegeo:set-contact-boundary-faces (find-body-id {gate_probe}) \"gate\")");
    let _ = writeln!(s, "(sdegeo:delete-region (find-body-id {gate_probe}))");

    s.push_str("\n;; @section mesh\n");
    let channel = p.sheet_thickness / mesh.channel_divisor();
    let _ = writeln!(s, "(define channel_spacing {})", um(channel));
    let _ = writeln!(s, "(define sd_spacing {})", um(4.0 * channel));
    let _ = writeln!(s, "(define oxide_spacing {})", um(t_hk / 2.0));
    let _ = writeln!(
        s,
        "(sdedr:define-refeval-window \"RW.Channel\" \"Cuboid\" {} {})",
        pos(SD_LENGTH_NM, 0.0, 0.0),
        pos(x_drain0, p.sheet_width, stack_h)
    );
    s.push_str(
        "(sdedr:define-refinement-size \"RS.Channel\" (* 4 channel_spacing) (* 4 channel_spacing) \
         channel_spacing channel_spacing channel_spacing (/ channel_spacing 2))\n",
    );
    s.push_str("(sdedr:define-refinement-placement \"RP.Channel\" \"RS.Channel\" \"RW.Channel\")\n");
    s.push_str("(sdedr:define-refinement-size \"RS.SD\" sd_spacing sd_spacing sd_spacing channel_spacing channel_spacing channel_spacing)\n");
    s.push_str("(sdedr:define-refinement-region \"RP.Source\" \"RS.SD\" \"R.Source\")\n");
    s.push_str("(sdedr:define-refinement-region \"RP.Drain\" \"RS.SD\" \"R.Drain\")\n");
    s.push_str("(sdedr:define-refinement-size \"RS.Oxide\" oxide_spacing oxide_spacing oxide_spacing oxide_spacing oxide_spacing oxide_spacing)\n");
    for k in 0..n {
        let _ = writeln!(s, "(sdedr:define-refinement-region \"RP.GateOx_{k}\" \"RS.Oxide\" \"R.GateOx_{k}\")");
    }

    s.push_str("\n;; @section build\n");
    s.push_str("(sde:build-mesh \"snmesh\" \"\" \"nsfet_msh\")\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(script: &str, needle: &str) -> usize {
        script.lines().filter(|l| l.contains(needle)).count()
    }

    #[test]
    fn header_echoes_gate_length() {
        let s = generate_sde(&DesignParams::reference(), MeshDensity::Default).unwrap();
        assert!(s.lines().any(|l| l == "(define gate_length 14)"));
    }

    #[test]
    fn sheet_count_drives_channel_regions() {
        let one = DesignParams { num_sheets: 1, ..DesignParams::reference() };
        let three = DesignParams { num_sheets: 3, ..DesignParams::reference() };
        let s1 = generate_sde(&one, MeshDensity::Default).unwrap();
        let s3 = generate_sde(&three, MeshDensity::Default).unwrap();
        let channel = |s: &str| {
            s.lines().filter(|l| l.starts_with("(sdegeo:create-cuboid") && l.contains("\"R.Channel_")).count()
        };
        assert_eq!(channel(&s3), channel(&s1) + 2);
    }

    #[test]
    fn region_count_is_affine_in_sheets() {
        let counts: Vec<usize> = (1..=5)
            .map(|n| {
                let p = DesignParams { num_sheets: n, vertical_pitch: 12.0, ..DesignParams::reference() };
                count(&generate_sde(&p, MeshDensity::Default).unwrap(), "(sdegeo:create-cuboid")
            })
            .collect();
        let d = counts[1] - counts[0];
        assert!(counts.windows(2).all(|w| w[1] - w[0] == d));
        assert_eq!(counts[0], 7);
    }

    #[test]
    fn mesh_tag_only_changes_spacing_constants() {
        let p = DesignParams::reference();
        let coarse = generate_sde(&p, MeshDensity::Coarse).unwrap();
        let fine = generate_sde(&p, MeshDensity::Fine).unwrap();
        assert_ne!(coarse, fine);
        let a: Vec<&str> = coarse.lines().collect();
        let b: Vec<&str> = fine.lines().collect();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            if x != y {
                assert!(x.starts_with("(define ") && x.contains("_spacing"), "{x}");
                assert!(y.starts_with("(define ") && y.contains("_spacing"), "{y}");
            }
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let p = DesignParams { vertical_pitch: 4.0, ..DesignParams::reference() };
        assert!(matches!(generate_sde(&p, MeshDensity::Default), Err(DeckError::InvalidParams(_))));
    }
}
