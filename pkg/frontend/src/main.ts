/** DOM wiring: canvas, sliders, contour controls, status banner.
 * Server URL and dataset come from ?server=...&dataset=... query params. */

import { WebGlRenderer } from './glRenderer.js';
import { Viewer, SLIDER_RANGES } from './viewer.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const server = params.get('server') ?? window.location.origin;
  const dataset = params.get('dataset') ?? 'demo';

  const canvas = el<HTMLCanvasElement>('view');
  canvas.width = canvas.clientWidth;
  canvas.height = canvas.clientHeight;
  const viewer = new Viewer(new WebGlRenderer(canvas));

  const banner = el<HTMLDivElement>('banner');
  const status = el<HTMLDivElement>('status');
  const contourButton = el<HTMLButtonElement>('contour-button');
  const refresh = () => {
    banner.textContent = viewer.state.error ?? '';
    banner.style.display = viewer.state.error ? 'block' : 'none';
    status.textContent = viewer.state.status ?? '';
    contourButton.disabled = viewer.state.pendingJobId !== null;
    requestAnimationFrame(refresh);
  };
  refresh();

  await viewer.loadDataset(server, dataset);

  const bindSlider = (id: string, range: { min: number; max: number },
    initial: number, apply: (v: number) => void) => {
    const slider = el<HTMLInputElement>(id);
    slider.min = String(range.min);
    slider.max = String(range.max);
    slider.step = '0.01';
    slider.value = String(initial);
    slider.addEventListener('input', () => apply(parseFloat(slider.value)));
  };
  bindSlider('intensity', SLIDER_RANGES.intensity, viewer.state.uniforms.intensity,
    (v) => viewer.updateControls({ intensity: v }));
  bindSlider('balance', SLIDER_RANGES.balance, viewer.state.uniforms.balance,
    (v) => viewer.updateControls({ balance: v }));
  bindSlider('step-scale', SLIDER_RANGES.stepScale, 1.0,
    (v) => viewer.updateControls({ stepScale: v }));

  let dragging = false;
  let last: [number, number] = [0, 0];
  canvas.addEventListener('pointerdown', (e) => {
    dragging = true;
    last = [e.clientX, e.clientY];
    canvas.setPointerCapture(e.pointerId);
  });
  canvas.addEventListener('pointermove', (e) => {
    if (!dragging) return;
    viewer.drag(e.clientX - last[0], e.clientY - last[1]);
    last = [e.clientX, e.clientY];
  });
  canvas.addEventListener('pointerup', () => { dragging = false; });
  canvas.addEventListener('wheel', (e) => {
    e.preventDefault();
    viewer.zoom(e.deltaY);
  }, { passive: false });

  const isoInput = el<HTMLInputElement>('iso-value');
  contourButton.addEventListener('click', () => {
    viewer.requestContour(parseFloat(isoInput.value));
  });
  el<HTMLButtonElement>('toggle-volume').addEventListener('click', () => {
    viewer.toggleVolume();
  });
}

boot().catch((err) => {
  const banner = document.getElementById('banner');
  if (banner) {
    banner.textContent = String(err);
    banner.style.display = 'block';
  }
});
