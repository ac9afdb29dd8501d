import init, { Demo, eigenmode_decay, skew_residual } from "./pkg/hydrostat_web.js";

const $ = (id) => document.getElementById(id);
const LABELS = ["t", "‖v‖", "‖T‖", "‖∇v‖", "‖∇T‖", "K1", "G1"];

let demo = null;
let running = false;
let skewSeed = 1;

function reset() {
  demo?.free();
  demo = new Demo(+$("n").value, BigInt($("seed").value), +$("wind").value);
  const c = $("field");
  c.width = demo.nx();
  c.height = demo.ny();
  $("level").max = demo.nz() - 1;
  $("level").value = demo.nz() - 1;
  draw();
}

function colour(s) {
  // diverging blue-white-red for s in [-1, 1]
  const a = Math.min(1, Math.abs(s));
  const hi = 255, lo = Math.round(255 * (1 - a));
  return s < 0 ? [lo, lo, hi] : [hi, lo, lo];
}

function draw() {
  const k = +$("level").value;
  const speed = $("quantity").value === "speed";
  const data = speed ? demo.speed_slice(k) : demo.temperature_slice(k);
  const nx = demo.nx(), ny = demo.ny();
  const scale = Math.max(1e-12, ...data.map(Math.abs));
  const ctx = $("field").getContext("2d");
  const img = ctx.createImageData(nx, ny);
  for (let j = 0; j < ny; j++) {
    for (let i = 0; i < nx; i++) {
      const v = data[i + nx * j] / scale;
      const [r, g, b] = colour(speed ? 2 * v - 1 : v);
      const p = 4 * (i + nx * (ny - 1 - j));
      img.data.set([r, g, b, 255], p);
    }
  }
  ctx.putImageData(img, 0, 0);
  const row = demo.ledger_row();
  $("ledger").innerHTML = LABELS.map((l, i) => `<tr><td>${l}</td><td>${row[i].toExponential(4)}</td></tr>`).join("")
    + `<tr><td>steps</td><td>${demo.steps()}</td></tr>`;
}

function loop() {
  if (!running) return;
  try {
    demo.step(2);
    draw();
    requestAnimationFrame(loop);
  } catch (e) {
    running = false;
    $("run").textContent = "run";
    alert(e.message ?? e);
  }
}

await init();
reset();
$("reset").onclick = reset;
$("level").oninput = draw;
$("quantity").onchange = draw;
$("run").onclick = () => {
  running = !running;
  $("run").textContent = running ? "pause" : "run";
  loop();
};
$("eigen").onclick = () => {
  const [ratio, exact, rel] = eigenmode_decay(16, 0.5);
  $("eigen-out").textContent = `measured ${ratio.toFixed(6)}, exact ${exact.toFixed(6)}, relative error ${rel.toExponential(2)}`;
};
$("skew").onclick = () => {
  $("skew-out").textContent = `seed ${skewSeed}: ${skew_residual(16, BigInt(skewSeed++)).toExponential(2)}`;
};
