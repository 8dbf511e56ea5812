/**
 * Annotator entry point: connect to the gateway, render the scene, drive the
 * label-and-submit loop with hotkeys, poll while the server trains.
 */

import { ApiError, ExperimentStatus, GatewayClient } from "./api";
import { CloudTable, HeatmapTable, parseCloud, parseHeatmap } from "./binary";
import { classColor, uncertaintyRamp } from "./palette";
import { AnnotationSession, ColorMode } from "./state";
import { PointCloudView } from "./renderer";

const POLL_INTERVAL_MS = 1000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class App {
  private client: GatewayClient;
  private view: PointCloudView;
  private session: AnnotationSession | null = null;
  private status: ExperimentStatus | null = null;
  private cloud: CloudTable | null = null;
  private heatmap: HeatmapTable | null = null;
  private scene = "";
  private mode: ColorMode = "rgb";
  private polling: number | null = null;

  constructor() {
    const base = (document.body.dataset.gateway ?? window.location.origin);
    this.client = new GatewayClient(base);
    this.view = new PointCloudView(el<HTMLCanvasElement>("view"));
    this.bindUi();
  }

  private bindUi(): void {
    el<HTMLSelectElement>("mode").addEventListener("change", (e) => {
      this.mode = (e.target as HTMLSelectElement).value as ColorMode;
      this.recolor();  // camera pose is untouched by a mode switch
    });
    el<HTMLButtonElement>("submit").addEventListener("click", () => this.submit());
    window.addEventListener("keydown", (e) => this.onKey(e));
  }

  async start(): Promise<void> {
    const experiments = await this.client.listExperiments();
    if (experiments.length === 0) {
      this.banner("no experiment is running on the gateway");
      return;
    }
    this.status = experiments[0];
    this.scene = this.status.scenes[0];
    this.renderPalette();
    await this.loadScene();
    await this.refreshQueries();
    this.render();
  }

  private banner(text: string, isError = false): void {
    const node = el<HTMLDivElement>("banner");
    node.textContent = text;
    node.className = isError ? "banner error" : "banner";
  }

  private renderPalette(): void {
    const list = el<HTMLUListElement>("palette");
    list.innerHTML = "";
    this.status!.class_names.forEach((name, i) => {
      const item = document.createElement("li");
      const [r, g, b] = classColor(i);
      item.innerHTML = `<span class="swatch" style="background: rgb(${255 * r}, ${255 * g}, ${255 * b})"></span> <b>${i + 1}</b> ${name}`;
      list.appendChild(item);
    });
  }

  private async loadScene(): Promise<void> {
    const id = this.status!.id;
    try {
      this.cloud = parseCloud(await this.client.cloud(id, this.scene));
      this.heatmap = parseHeatmap(await this.client.heatmap(id, this.scene));
    } catch (err) {
      this.banner(`failed to parse scene stream: ${err}`, true);
      throw err;
    }
    this.view.setPoints(this.cloud.positions);
    this.recolor();
  }

  private async refreshQueries(): Promise<void> {
    const id = this.status!.id;
    const pending = await this.client.queries(id);
    if (pending.queries.length > 0) {
      this.session = new AnnotationSession(
        id, pending.iteration, pending.queries,
        this.status!.class_names.length, window.localStorage);
    } else {
      this.session = null;
    }
  }

  private recolor(): void {
    if (!this.cloud) return;
    let colors: Float32Array;
    if (this.mode === "rgb" || !this.heatmap) {
      colors = this.cloud.colors;
    } else if (this.mode === "uncertainty-heatmap") {
      colors = uncertaintyRamp(this.heatmap.uncertainty);
    } else {
      colors = new Float32Array(this.cloud.n * 3);
      for (let i = 0; i < this.cloud.n; i++) {
        const [r, g, b] = classColor(this.heatmap.topClass[i]);
        colors[3 * i] = r;
        colors[3 * i + 1] = g;
        colors[3 * i + 2] = b;
      }
    }
    this.view.setColors(colors);
    this.view.draw();
  }

  private render(): void {
    const status = this.status!;
    el<HTMLSpanElement>("progress").textContent =
      `iteration ${status.iteration}/${status.total_iterations} | ` +
      `${status.budget_used} labels | ${status.status}`;
    if (status.status === "done") {
      this.showCompletion();
      return;
    }
    const session = this.session;
    const queryList = el<HTMLOListElement>("queries");
    queryList.innerHTML = "";
    if (!session) return;
    session.queries.forEach((q, index) => {
      const item = document.createElement("li");
      const chosen = session.classOf(q);
      const label = chosen === null ? "-" : status.class_names[chosen];
      item.textContent = `${q.scene} #${q.point} (u=${q.u.toFixed(3)}): ${label}`;
      if (session.cursor === q) item.className = "active";
      item.addEventListener("click", () => {
        session.jumpTo(index);
        this.render();
      });
      queryList.appendChild(item);
    });
    el<HTMLButtonElement>("submit").disabled = !session.complete;
    this.view.setSizes(session.markersFor(this.scene),
                       session.cursor?.scene === this.scene ? session.cursor.point : null);
    this.view.draw();
  }

  private onKey(event: KeyboardEvent): void {
    const session = this.session;
    if (!session) return;
    if (event.key >= "1" && event.key <= "9") {
      if (session.assign(Number(event.key) - 1)) {
        session.moveCursor(1);
        this.render();
      }
    } else if (event.key === "Tab" || event.key === "ArrowDown") {
      event.preventDefault();
      session.moveCursor(1);
      this.render();
    } else if (event.key === "ArrowUp") {
      session.moveCursor(-1);
      this.render();
    } else if (event.key === "Backspace") {
      session.clearAssignment();
      this.render();
    } else if (event.key === "Enter") {
      void this.submit();
    }
  }

  private async submit(): Promise<void> {
    const session = this.session;
    const body = session?.buildSubmission();
    if (!session || !body) return;
    try {
      this.banner("submitting...");
      this.status = await this.client.submitLabels(session.experiment, body);
      session.finish();
      this.session = null;
      this.banner("training...");
      this.pollUntilReady();
    } catch (err) {
      if (err instanceof ApiError && (err.status === 409 || err.status === 422)) {
        this.banner(`${err.detail}; refreshing`, true);
        this.status = await this.client.status(session.experiment);
        await this.refreshQueries();
        this.render();
      } else {
        this.banner(`submit failed: ${err}`, true);
      }
    }
  }

  private pollUntilReady(): void {
    if (this.polling !== null) window.clearInterval(this.polling);
    this.polling = window.setInterval(async () => {
      this.status = await this.client.status(this.status!.id);
      if (this.status.status === "training") return;
      window.clearInterval(this.polling!);
      this.polling = null;
      if (this.status.status === "done") {
        this.showCompletion();
        return;
      }
      await this.loadScene();  // fresh heatmap for the new round
      await this.refreshQueries();
      this.banner(`iteration ${this.session?.iteration}: label the queried points`);
      this.render();
    }, POLL_INTERVAL_MS);
  }

  private async showCompletion(): Promise<void> {
    this.banner("annotation complete");
    const csv = await this.client.metrics(this.status!.id);
    const rows = csv.trim().split("\n").map((line) => line.split(","));
    const table = el<HTMLTableElement>("metrics");
    table.innerHTML = rows.map((cells, i) =>
      `<tr>${cells.map((c) => i === 0 ? `<th>${c}</th>` : `<td>${c}</td>`).join("")}</tr>`
    ).join("");
    el<HTMLDivElement>("completion").style.display = "block";
  }
}

window.addEventListener("DOMContentLoaded", () => {
  new App().start().catch((err) => {
    const banner = document.getElementById("banner");
    if (banner) banner.textContent = `startup failed: ${err}`;
  });
});
