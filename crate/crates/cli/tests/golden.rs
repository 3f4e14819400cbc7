use urnflow::ensemble::csv_header;
use urnflow_cli::output::{analysis_header, flow_header, path_header, render_svg, Panel, Series};

#[test]
fn csv_headers_are_stable() {
    assert_eq!(path_header(3), "n,tau,z_1,z_2,z_3,x_1,x_2,x_3,pop");
    assert_eq!(flow_header(2), "t,x_1,x_2,f");
    assert_eq!(analysis_header(2), "kind,support,residual,value,x_1,x_2");
    assert_eq!(
        csv_header(&[1000, 10000]),
        "replicate,outcome,steps,final_pop,final_tau,sum_inv_pow15,sum_inv_pow2,tail_increment15,dist_1000,dist_10000,dist_final"
    );
}

#[test]
fn svg_has_fixed_view_box() {
    let panel = Panel {
        title: "x".into(),
        x_label: "t".into(),
        series: vec![Series {
            name: "x_1".into(),
            points: vec![(0.0, 0.1), (1.0, 0.4), (2.0, 0.2)],
        }],
        log_y: false,
        reference: Some((0.25, "ref".into())),
    };
    let svg = render_svg(&[panel.clone(), panel]);
    assert!(svg.starts_with("<?xml"));
    assert!(svg.contains(r#"viewBox="0 0 800 600""#));
    assert!(svg.contains("stroke-dasharray"));
    assert!(svg.trim_end().ends_with("</svg>"));
}
