// Expects the bindings in ./pkg (wasm-pack build --target web --out-dir www/pkg).
import init, { guard_trace, what_if, boost_curve } from "./pkg/tdguard_wasm.js";

const $ = (id) => document.getElementById(id);

function numbers(text) {
  return text.split(/[\s,]+/).filter((s) => s.length > 0).map(Number);
}

function fail(el, e) {
  el.innerHTML = "";
  const p = document.createElement("p");
  p.className = "err";
  p.textContent = String(e.message ?? e);
  el.appendChild(p);
}

// Inclusion checkboxes survive re-runs as long as the stream length is unchanged.
let included = [];

function runTrace() {
  const out = $("trace-out");
  const evalues = numbers($("evalues").value);
  if (included.length !== evalues.length) included = evalues.map(() => true);
  try {
    const res = JSON.parse(guard_trace(JSON.stringify({
      method: $("method").value,
      alpha: Number($("alpha").value),
      evalues,
      included,
    })));
    const table = document.createElement("table");
    table.innerHTML = "<tr><th>t</th><th>E<sub>t</sub></th><th>in S</th><th>|S|</th><th>d</th><th>TDP bound</th><th>removed</th></tr>";
    res.rows.forEach((row, i) => {
      const tr = document.createElement("tr");
      if (res.removed[i] !== null) tr.className = "removed";
      const box = `<input type="checkbox" data-i="${i}" ${included[i] ? "checked" : ""}>`;
      tr.innerHTML = `<td>${row.t}</td><td>${evalues[i]}</td><td>${box}</td><td>${row.query_size}</td>` +
        `<td>${row.d}</td><td>${row.tdp_bound.toFixed(3)}</td><td>${res.removed[i] ?? ""}</td>`;
      table.appendChild(tr);
    });
    out.innerHTML = "";
    out.appendChild(table);
    out.querySelectorAll("input[type=checkbox]").forEach((b) => {
      b.addEventListener("change", () => {
        included[Number(b.dataset.i)] = b.checked;
        runTrace();
      });
    });
  } catch (e) {
    fail(out, e);
  }
}

function runWhatIf() {
  const out = $("whatif-out");
  try {
    const res = JSON.parse(what_if(JSON.stringify({
      method: $("method").value,
      alpha: Number($("alpha").value),
      evalues: numbers($("evalues").value),
      subset: numbers($("subset").value),
    })));
    out.className = "";
    out.textContent = `d(S) = ${res.bound}   (unrejected witness I = {${res.witness.join(", ")}})`;
  } catch (e) {
    out.className = "err";
    out.textContent = String(e.message ?? e);
  }
}

function runBoost() {
  const out = $("boost-out");
  try {
    const lambda = Number($("lambda").value);
    const pts = JSON.parse(boost_curve(JSON.stringify({
      delta: Number($("delta").value),
      lambda: lambda < 1 ? lambda : null,
      m_min: Number($("mmin").value),
      m_max: Number($("mmax").value),
      points: 200,
    })));
    draw(pts);
    const at = (m) => pts.reduce((a, b) => (Math.abs(b.m - m) < Math.abs(a.m - m) ? b : a));
    out.className = "";
    out.textContent = `b(m) at m = ${at(20).m.toFixed(2)}: ${at(20).factor.toFixed(3)}`;
  } catch (e) {
    fail(out, e);
  }
}

function draw(pts) {
  const c = $("curve");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const pad = 36;
  const lx = pts.map((p) => Math.log(p.m));
  const ys = pts.map((p) => p.factor);
  const [x0, x1] = [lx[0], lx[lx.length - 1] || lx[0] + 1];
  const y1 = Math.max(...ys) * 1.05;
  const px = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (c.width - 2 * pad);
  const py = (y) => c.height - pad - ((y - 1) / (y1 - 1 || 1)) * (c.height - 2 * pad);
  g.strokeStyle = "#999";
  g.strokeRect(pad, pad, c.width - 2 * pad, c.height - 2 * pad);
  g.fillStyle = "#444";
  g.font = "12px system-ui";
  g.fillText("log m", c.width / 2, c.height - 8);
  g.fillText(y1.toFixed(2), 2, pad + 4);
  g.fillText("1", 2, c.height - pad);
  g.strokeStyle = "#1f5fa8";
  g.lineWidth = 2;
  g.beginPath();
  pts.forEach((p, i) => (i ? g.lineTo(px(lx[i]), py(p.factor)) : g.moveTo(px(lx[i]), py(p.factor))));
  g.stroke();
}

await init();
$("run").addEventListener("click", runTrace);
$("evalues").addEventListener("change", runTrace);
$("method").addEventListener("change", runTrace);
$("alpha").addEventListener("change", runTrace);
$("whatif").addEventListener("click", runWhatIf);
$("boost").addEventListener("click", runBoost);
runTrace();
runBoost();
