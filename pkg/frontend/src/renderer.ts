/** Minimal WebGL point-cloud view with an orbit camera. No dependencies. */

import { MarkerInfo } from "./state";

const VERTEX_SHADER = `
attribute vec3 position;
attribute vec3 color;
attribute float size;
uniform mat4 viewProjection;
varying vec3 vColor;
void main() {
  gl_Position = viewProjection * vec4(position, 1.0);
  gl_PointSize = size;
  vColor = color;
}
`;

const FRAGMENT_SHADER = `
precision mediump float;
varying vec3 vColor;
void main() {
  vec2 d = gl_PointCoord - vec2(0.5);
  if (dot(d, d) > 0.25) discard;
  gl_FragColor = vec4(vColor, 1.0);
}
`;

export interface CameraPose {
  azimuth: number;
  elevation: number;
  distance: number;
  target: [number, number, number];
}

function perspective(fovY: number, aspect: number, near: number, far: number): Float32Array {
  const f = 1.0 / Math.tan(fovY / 2);
  const out = new Float32Array(16);
  out[0] = f / aspect;
  out[5] = f;
  out[10] = (far + near) / (near - far);
  out[11] = -1;
  out[14] = (2 * far * near) / (near - far);
  return out;
}

function lookAtTimesProjection(pose: CameraPose, aspect: number): Float32Array {
  const ce = Math.cos(pose.elevation);
  const eye = [
    pose.target[0] + pose.distance * ce * Math.cos(pose.azimuth),
    pose.target[1] + pose.distance * ce * Math.sin(pose.azimuth),
    pose.target[2] + pose.distance * Math.sin(pose.elevation),
  ];
  const up = [0, 0, 1];
  const z = normalize([eye[0] - pose.target[0], eye[1] - pose.target[1], eye[2] - pose.target[2]]);
  const x = normalize(cross(up, z));
  const y = cross(z, x);
  const view = new Float32Array(16);
  view.set([x[0], y[0], z[0], 0, x[1], y[1], z[1], 0, x[2], y[2], z[2], 0, 0, 0, 0, 1]);
  view[12] = -(x[0] * eye[0] + x[1] * eye[1] + x[2] * eye[2]);
  view[13] = -(y[0] * eye[0] + y[1] * eye[1] + y[2] * eye[2]);
  view[14] = -(z[0] * eye[0] + z[1] * eye[1] + z[2] * eye[2]);
  const proj = perspective(Math.PI / 3, aspect, 0.05, 200);
  return multiply(proj, view);
}

function cross(a: number[], b: number[]): number[] {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

function normalize(v: number[]): number[] {
  const n = Math.hypot(v[0], v[1], v[2]) || 1;
  return [v[0] / n, v[1] / n, v[2] / n];
}

function multiply(a: Float32Array, b: Float32Array): Float32Array {
  const out = new Float32Array(16);
  for (let col = 0; col < 4; col++) {
    for (let row = 0; row < 4; row++) {
      let acc = 0;
      for (let k = 0; k < 4; k++) acc += a[k * 4 + row] * b[col * 4 + k];
      out[col * 4 + row] = acc;
    }
  }
  return out;
}

export class PointCloudView {
  pose: CameraPose = { azimuth: -1.1, elevation: 0.7, distance: 9, target: [0, 0, 0] };

  private gl: WebGLRenderingContext;
  private program: WebGLProgram;
  private buffers: { position: WebGLBuffer; color: WebGLBuffer; size: WebGLBuffer };
  private pointCount = 0;
  private positions: Float32Array | null = null;
  private baseSizes: Float32Array | null = null;
  private dragging = false;
  private lastX = 0;
  private lastY = 0;

  constructor(private canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl");
    if (!gl) throw new Error("WebGL is unavailable");
    this.gl = gl;
    this.program = this.compile();
    this.buffers = {
      position: gl.createBuffer()!,
      color: gl.createBuffer()!,
      size: gl.createBuffer()!,
    };
    this.bindInput();
  }

  private compile(): WebGLProgram {
    const gl = this.gl;
    const make = (kind: number, source: string) => {
      const shader = gl.createShader(kind)!;
      gl.shaderSource(shader, source);
      gl.compileShader(shader);
      if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
        throw new Error(gl.getShaderInfoLog(shader) ?? "shader compile failed");
      }
      return shader;
    };
    const program = gl.createProgram()!;
    gl.attachShader(program, make(gl.VERTEX_SHADER, VERTEX_SHADER));
    gl.attachShader(program, make(gl.FRAGMENT_SHADER, FRAGMENT_SHADER));
    gl.linkProgram(program);
    if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
      throw new Error(gl.getProgramInfoLog(program) ?? "program link failed");
    }
    return program;
  }

  private bindInput(): void {
    this.canvas.addEventListener("mousedown", (e) => {
      this.dragging = true;
      this.lastX = e.clientX;
      this.lastY = e.clientY;
    });
    window.addEventListener("mouseup", () => (this.dragging = false));
    window.addEventListener("mousemove", (e) => {
      if (!this.dragging) return;
      this.pose.azimuth -= (e.clientX - this.lastX) * 0.008;
      this.pose.elevation = Math.min(1.5, Math.max(-1.5,
        this.pose.elevation + (e.clientY - this.lastY) * 0.008));
      this.lastX = e.clientX;
      this.lastY = e.clientY;
      this.draw();
    });
    this.canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.pose.distance = Math.min(60, Math.max(1,
        this.pose.distance * (e.deltaY > 0 ? 1.1 : 0.9)));
      this.draw();
    }, { passive: false });
  }

  setPoints(positions: Float32Array): void {
    this.positions = positions;
    this.pointCount = positions.length / 3;
    // center the camera on the cloud
    let cx = 0, cy = 0, cz = 0;
    for (let i = 0; i < this.pointCount; i++) {
      cx += positions[3 * i];
      cy += positions[3 * i + 1];
      cz += positions[3 * i + 2];
    }
    this.pose.target = [cx / this.pointCount, cy / this.pointCount, cz / this.pointCount];
    this.baseSizes = new Float32Array(this.pointCount).fill(2.5);
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.buffers.position);
    gl.bufferData(gl.ARRAY_BUFFER, positions, gl.STATIC_DRAW);
    this.setSizes(null, null);
  }

  setColors(colors: Float32Array): void {
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.buffers.color);
    gl.bufferData(gl.ARRAY_BUFFER, colors, gl.STATIC_DRAW);
  }

  /** Enlarge queried points: pending ones most, prior iterations less. */
  setSizes(markers: MarkerInfo[] | null, activePoint: number | null): void {
    if (!this.baseSizes) return;
    const sizes = new Float32Array(this.baseSizes);
    for (const m of markers ?? []) {
      sizes[m.point] = m.current ? 11 : 6;
    }
    if (activePoint !== null) sizes[activePoint] = 16;
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.buffers.size);
    gl.bufferData(gl.ARRAY_BUFFER, sizes, gl.STATIC_DRAW);
  }

  draw(): void {
    const gl = this.gl;
    if (!this.positions) return;
    gl.viewport(0, 0, this.canvas.width, this.canvas.height);
    gl.clearColor(0.08, 0.09, 0.11, 1);
    gl.enable(gl.DEPTH_TEST);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    gl.useProgram(this.program);
    const viewProjection = lookAtTimesProjection(
      this.pose, this.canvas.width / this.canvas.height);
    gl.uniformMatrix4fv(
      gl.getUniformLocation(this.program, "viewProjection"), false, viewProjection);
    const attach = (name: string, buffer: WebGLBuffer, size: number) => {
      const loc = gl.getAttribLocation(this.program, name);
      gl.bindBuffer(gl.ARRAY_BUFFER, buffer);
      gl.enableVertexAttribArray(loc);
      gl.vertexAttribPointer(loc, size, gl.FLOAT, false, 0, 0);
    };
    attach("position", this.buffers.position, 3);
    attach("color", this.buffers.color, 3);
    attach("size", this.buffers.size, 1);
    gl.drawArrays(gl.POINTS, 0, this.pointCount);
  }
}
