import init, { Demo, heatmapLoss, privacyView } from "./pkg/thermosynth_wasm.js";

const $ = (id) => document.getElementById(id);
const CELL = 16;
let demo;
let mask = [];

function status(msg) {
  $("status").textContent = msg;
}

function grey(v) {
  const g = Math.round(255 * (Math.max(-1, Math.min(1, v)) + 1) / 2);
  return `rgb(${g},${g},${g})`;
}

function drawCells(canvas, h, w, color) {
  canvas.width = w * CELL;
  canvas.height = h * CELL;
  const ctx = canvas.getContext("2d");
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      ctx.fillStyle = color(y * w + x);
      ctx.fillRect(x * CELL, y * CELL, CELL, CELL);
    }
  }
  return ctx;
}

function heatmapAt(u) {
  return demo.sceneHeatmap(u, Number($("v").value), Number($("arm").value));
}

function resetMask() {
  mask = new Array(demo.heatmapHeight * demo.heatmapWidth).fill(1);
}

function synthesize() {
  const [h, w] = [demo.heatmapHeight, demo.heatmapWidth];
  const heat = heatmapAt(Number($("u").value));
  drawCells($("heat"), h, w, (i) => grey(heat[i]));

  const [ih, iw] = [demo.imageHeight, demo.imageWidth];
  const pixels = demo.render(heat, Number($("code").value), Number($("seed").value));
  const canvas = $("rgb");
  canvas.width = iw;
  canvas.height = ih;
  canvas.style.width = `${w * CELL}px`;
  canvas.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(pixels), iw, ih), 0, 0);
  compare(heat);
}

function compare(heat = heatmapAt(Number($("u").value))) {
  const [h, w] = [demo.heatmapHeight, demo.heatmapWidth];
  const other = heatmapAt(Number($("u2").value));
  const eps = Number($("eps").value);
  $("eps-val").textContent = eps.toFixed(2);
  const ctx = drawCells($("diff"), h, w, (i) => {
    const d = Math.max(0, Math.abs(heat[i] - other[i]) - eps) / 2;
    return `rgb(${Math.round(255 * Math.min(1, d * 2))},40,40)`;
  });
  ctx.strokeStyle = "#4af";
  for (let i = 0; i < mask.length; i++) {
    if (!mask[i]) {
      const [x, y] = [i % w, Math.floor(i / w)];
      ctx.beginPath();
      ctx.moveTo(x * CELL, y * CELL);
      ctx.lineTo((x + 1) * CELL, (y + 1) * CELL);
      ctx.stroke();
    }
  }
  const loss = heatmapLoss(new Float32Array(heat), new Float32Array(other), new Float32Array(mask), h, w, eps);
  $("loss").textContent = loss.toFixed(4);
}

function privacy() {
  const [w, h] = $("res").value.split("x").map(Number);
  const view = JSON.parse(privacyView(Number($("frame").value), w, h));
  const canvas = $("thermal");
  const ctx = canvas.getContext("2d");
  const sx = canvas.width / view.native_width;
  const sy = canvas.height / view.native_height;
  const cw = canvas.width / w;
  const ch = canvas.height / h;
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const t = (view.frame[y * w + x] - 20) / 25;
      ctx.fillStyle = grey(2 * t - 1);
      ctx.fillRect(x * cw, y * ch, Math.ceil(cw), Math.ceil(ch));
    }
  }
  const [px, py] = view.person;
  ctx.strokeStyle = "#0c0";
  ctx.beginPath();
  ctx.moveTo(px * sx - 6, py * sy);
  ctx.lineTo(px * sx + 6, py * sy);
  ctx.moveTo(px * sx, py * sy - 6);
  ctx.lineTo(px * sx, py * sy + 6);
  ctx.stroke();
  const d = view.detection;
  if (d) {
    ctx.strokeStyle = view.hit ? "#0af" : "#f40";
    ctx.strokeRect(d.x0 * sx, d.y0 * sy, (d.x1 - d.x0) * sx, (d.y1 - d.y0) * sy);
  }
  $("hit").textContent = view.hit ? "yes" : "no";
  let hits = 0;
  for (let s = 0; s < 50; s++) hits += JSON.parse(privacyView(s, w, h)).hit ? 1 : 0;
  $("rate").textContent = `${hits}/50`;
}

function fillCodes() {
  const select = $("code");
  select.innerHTML = "";
  const random = document.createElement("option");
  random.value = "-1";
  random.textContent = "random (seed)";
  select.append(random);
  demo.codeIds().forEach((id, i) => {
    const o = document.createElement("option");
    o.value = String(i);
    o.textContent = id;
    select.append(o);
  });
}

function guarded(f) {
  return (...args) => {
    try {
      f(...args);
      status("");
    } catch (e) {
      status(String(e));
    }
  };
}

async function readFile(input, as) {
  const file = input.files[0];
  return as === "text" ? file.text() : new Uint8Array(await file.arrayBuffer());
}

async function main() {
  await init();
  demo = new Demo(0);
  resetMask();
  fillCodes();

  for (const id of ["u", "v", "arm", "code", "seed"]) $(id).addEventListener("input", guarded(synthesize));
  for (const id of ["u2", "eps"]) $(id).addEventListener("input", guarded(() => compare()));
  for (const id of ["frame", "res"]) $(id).addEventListener("input", guarded(privacy));
  $("clear-mask").addEventListener("click", guarded(() => { resetMask(); compare(); }));
  $("diff").addEventListener("click", guarded((ev) => {
    const x = Math.floor(ev.offsetX / CELL);
    const y = Math.floor(ev.offsetY / CELL);
    const i = y * demo.heatmapWidth + x;
    mask[i] = mask[i] ? 0 : 1;
    compare();
  }));
  $("bundle").addEventListener("change", async () => {
    try {
      demo.loadBundle(await readFile($("bundle"), "bytes"));
      resetMask();
      fillCodes();
      synthesize();
      status("");
    } catch (e) {
      status(String(e));
    }
  });
  $("latents").addEventListener("change", async () => {
    try {
      demo.loadLatents(await readFile($("latents"), "text"));
      fillCodes();
      synthesize();
      status("");
    } catch (e) {
      status(String(e));
    }
  });

  guarded(() => { synthesize(); privacy(); })();
}

main().catch((e) => status(String(e)));
