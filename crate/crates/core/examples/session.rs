//! Runs the session server in-process and drives it like an interactive
//! client: load a sheet, start the loop, drag a handle twice and read the
//! throttled event stream until the session falls silent.
//!
//! Run with `cargo run --release --example session`.

use std::net::TcpListener;
use std::time::Duration;

use devquad::io::write_quad_mesh;
use devquad::mesh::Grid;
use devquad::session::{
    serve, Client, ClientMessage, ServerMessage, SessionService, SessionStatus,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    std::thread::spawn(move || serve(listener, SessionService::default()));

    let mut client = Client::connect(addr)?;
    client.set_read_timeout(Some(Duration::from_secs(60)))?;
    client.send(&ClientMessage::Open { binary: true })?;
    let ServerMessage::Opened { session, .. } = client.recv()? else {
        return Err("expected opened".into());
    };
    let grid = Grid::planar(8, 8, 1.0 / 7.0);
    let mut obj = Vec::new();
    write_quad_mesh(grid.mesh(), &mut obj)?;
    client.send(&ClientMessage::LoadMesh {
        session,
        obj: String::from_utf8(obj)?,
        fixed_boundary: false,
        fixed: grid.row(0).iter().map(|v| v.idx()).collect(),
    })?;
    client.send(&ClientMessage::Start { session })?;
    let corner = grid.vertex(7, 7).idx();
    for z in [0.2, 0.4] {
        client.send(&ClientMessage::Drag {
            session,
            revision: None,
            vertex: corner,
            target: [1.0, 0.9, z],
        })?;
    }
    let mut events = 0;
    loop {
        match client.recv()? {
            ServerMessage::Event(s) => {
                events += 1;
                let z = s.positions.values().ok_or("bad payload")?[3 * corner + 2];
                let e = s.trace.as_ref().map_or(0.0, |t| t.total);
                println!(
                    "revision {} iteration {:>3}: corner z {z:.4}, energy {e:.3e}",
                    s.revision, s.iteration
                );
            }
            ServerMessage::Status {
                status, revision, ..
            } => {
                println!("status {status:?} at revision {revision}");
                if matches!(
                    status,
                    SessionStatus::Converged | SessionStatus::Unreachable
                ) {
                    break;
                }
            }
            other => println!("{other:?}"),
        }
    }
    println!("{events} events streamed");
    client.send(&ClientMessage::Close { session })?;
    Ok(())
}
