// Expects the wasm-bindgen output (`--target web`) in ./pkg.
import init, { Session, scenarios } from "./pkg/stare_demo.js";

const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
const $ = (id) => document.getElementById(id);

let session = null;
let sweep = null;

function status(msg) {
  $("status").textContent = msg || "";
}

function drawHistogram(h) {
  const c = $("hist"), g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const bins = h.counts[0].length;
  const stacked = Array.from({ length: bins }, (_, b) => h.counts.reduce((s, row) => s + row[b], 0));
  const top = Math.max(...stacked, 1);
  const w = c.width / bins;
  for (let b = 0; b < bins; b++) {
    let y = c.height;
    h.counts.forEach((row, label) => {
      const hgt = (row[b] / top) * (c.height - 10);
      g.fillStyle = COLORS[label % COLORS.length];
      g.fillRect(b * w, y - hgt, Math.max(w - 1, 1), hgt);
      y -= hgt;
    });
  }
}

function drawCurves(rho) {
  const c = $("curves"), g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  if (!sweep) return;
  const pad = 40;
  const finite = sweep.curves.flatMap(([, pts]) => pts.map((p) => p[1])).filter((v) => v < 1e300);
  // Log scale: the K = 1 curve is usually orders of magnitude above the rest.
  const ly = (v) => Math.log10(Math.max(v, 1e-4));
  const ymin = Math.min(...finite.map(ly)), ymax = Math.max(...finite.map(ly));
  const X = (r) => pad + (r / sweep.rho_max) * (c.width - 2 * pad);
  const Y = (v) => c.height - pad - ((ly(v) - ymin) / (ymax - ymin || 1)) * (c.height - 2 * pad);

  g.fillStyle = "#eef5ee";
  g.fillRect(X(sweep.rho_lo), pad / 2, X(sweep.rho_hi) - X(sweep.rho_lo), c.height - 1.5 * pad);

  sweep.curves.forEach(([k, pts]) => {
    g.strokeStyle = COLORS[(k - 1) % COLORS.length];
    g.lineWidth = 2;
    g.beginPath();
    // Hinge losses are linear between breakpoints but not on a log axis, so
    // sample each segment.
    for (let i = 0; i + 1 < pts.length; i++) {
      const [r0, v0] = pts[i], [r1, v1] = pts[i + 1];
      for (let s = 0; s <= 20; s++) {
        const t = s / 20, r = r0 + t * (r1 - r0), v = v0 + t * (v1 - v0);
        if (i === 0 && s === 0) g.moveTo(X(r), Y(v)); else g.lineTo(X(r), Y(v));
      }
    }
    g.stroke();
    const [, vEnd] = pts[pts.length - 1];
    g.fillStyle = g.strokeStyle;
    g.fillText(`K=${k}`, c.width - pad + 4, Y(vEnd) + 4);
  });

  g.strokeStyle = "#000";
  g.lineWidth = 1;
  g.setLineDash([4, 4]);
  g.beginPath();
  g.moveTo(X(rho), pad / 2);
  g.lineTo(X(rho), c.height - pad);
  g.stroke();
  g.setLineDash([]);
  g.fillStyle = "#000";
  g.fillText("0", X(0) - 3, c.height - pad + 14);
  g.fillText(sweep.rho_max.toFixed(3), X(sweep.rho_max) - 20, c.height - pad + 14);
  g.fillText("rho", c.width / 2, c.height - 8);
}

function draw() {
  status();
  try {
    session = new Session($("scenario").value, Number($("n").value), Number($("seed").value));
    drawHistogram(JSON.parse(session.histogram(60)));
    sweep = null;
    drawCurves(0);
    $("sweep").disabled = false;
    $("rho").disabled = true;
    $("verdict").textContent = "";
    $("choice").textContent = "";
  } catch (e) {
    status(e.message ?? e);
  }
}

function runSweep() {
  status("fitting...");
  // Let the status paint before the synchronous fit blocks the page.
  setTimeout(() => {
    try {
      sweep = JSON.parse(session.sweep(Number($("kmax").value), Number($("lambda").value)));
      const v = sweep;
      $("verdict").textContent =
        `First wide region: K = ${v.chosen_k} on rho in [${v.rho_lo.toFixed(3)}, ${v.rho_hi.toFixed(3)}]` +
        (v.low_confidence ? " (low confidence)" : "") + `. BIC would pick K = ${v.bic_k}.`;
      const slider = $("rho");
      slider.max = v.rho_max;
      slider.step = v.rho_max / 1000;
      slider.value = (v.rho_lo + v.rho_hi) / 2;
      slider.disabled = false;
      status();
      pick();
    } catch (e) {
      status(e.message ?? e);
    }
  }, 10);
}

function pick() {
  const rho = Number($("rho").value);
  const c = JSON.parse(session.choose(rho));
  drawCurves(rho);
  const rows = c.losses
    .map(([k, l]) => `<tr class="${k === c.chosen_k ? "chosen" : ""}"><td>${k}</td><td>${l.toFixed(4)}</td></tr>`)
    .join("");
  $("choice").innerHTML =
    `<p>rho = ${rho.toFixed(4)}: K = ${c.chosen_k}, component sizes ${c.sizes.join(", ")}</p>` +
    `<table><tr><th>K</th><th>loss</th></tr>${rows}</table>`;
}

await init();
for (const name of JSON.parse(scenarios())) {
  if (name.includes("d50")) continue;
  const o = document.createElement("option");
  o.value = o.textContent = name;
  $("scenario").appendChild(o);
}
$("draw").onclick = draw;
$("sweep").onclick = runSweep;
$("rho").oninput = pick;
draw();
