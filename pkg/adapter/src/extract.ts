/**
 * Burst-point frame features: decode the nearest frame at or before each
 * burst timestamp, center-crop/resize it to the network's input, and emit
 * the penultimate-layer activations in the pipeline's features.jsonl schema.
 */

import { execFileSync } from 'node:child_process'
import * as fs from 'node:fs'
import * as path from 'node:path'
import * as tf from '@tensorflow/tfjs'

import { FEATURE_DIM, FeatureExtractor } from './model.js'
import { Y4mVideo, durationSeconds, frameToRgb, parseY4m } from './y4m.js'

export class JobError extends Error {}

export interface ClusterRow {
  videoId: string
  clusterIndex: number
  burstPoint: number
}

export interface FeatureRecord {
  video_id: string
  cluster_index: number
  vector: number[]
}

export function readClusters(clustersPath: string): Map<string, ClusterRow[]> {
  if (!fs.existsSync(clustersPath)) {
    throw new JobError(`clusters file missing: ${clustersPath}`)
  }
  const byVideo = new Map<string, ClusterRow[]>()
  const lines = fs.readFileSync(clustersPath, 'utf-8').split('\n')
  lines.forEach((line, i) => {
    if (!line.trim()) return
    let rec: { video_id?: string; cluster_index?: number; burst_point?: number }
    try {
      rec = JSON.parse(line)
    } catch {
      throw new JobError(`clusters line ${i + 1}: invalid JSON`)
    }
    if (typeof rec.video_id !== 'string' || typeof rec.cluster_index !== 'number'
        || typeof rec.burst_point !== 'number') {
      throw new JobError(`clusters line ${i + 1}: need video_id, cluster_index, burst_point`)
    }
    const rows = byVideo.get(rec.video_id) ?? []
    rows.push({
      videoId: rec.video_id,
      clusterIndex: rec.cluster_index,
      burstPoint: rec.burst_point,
    })
    byVideo.set(rec.video_id, rows)
  })
  for (const rows of byVideo.values()) {
    rows.sort((a, b) => a.clusterIndex - b.clusterIndex)
  }
  return byVideo
}

/** Nearest decoded frame at or before the timestamp, clamped into range. */
export function selectFrameIndex(
  burstPoint: number, fpsNum: number, fpsDen: number, frameCount: number,
): { index: number; clamped: boolean } {
  const raw = Math.floor((burstPoint * fpsNum) / fpsDen)
  if (raw < 0) return { index: 0, clamped: true }
  if (raw >= frameCount) return { index: frameCount - 1, clamped: true }
  return { index: raw, clamped: false }
}

/** Center-crop to a square, bilinear-resize to the network input, [0, 1]. */
export function preprocess(
  rgb: Float32Array, width: number, height: number, inputSize: number,
): tf.Tensor4D {
  return tf.tidy(() => {
    let img = tf.tensor3d(rgb, [height, width, 3])
    const side = Math.min(width, height)
    const top = (height - side) >> 1
    const left = (width - side) >> 1
    img = img.slice([top, left, 0], [side, side, 3])
    const resized = tf.image.resizeBilinear(img, [inputSize, inputSize])
    return resized.expandDims(0) as tf.Tensor4D
  })
}

function decodeWithFfmpeg(videoPath: string): Y4mVideo {
  let out: Buffer
  try {
    out = execFileSync(
      'ffmpeg',
      ['-v', 'error', '-i', videoPath, '-f', 'yuv4mpegpipe', '-pix_fmt', 'yuv420p', '-'],
      { maxBuffer: 1 << 30 },
    )
  } catch (err) {
    throw new JobError(
      `cannot decode ${videoPath}: not a .y4m file and ffmpeg failed or is ` +
      `not installed (${(err as Error).message.split('\n')[0]})`,
    )
  }
  return parseY4m(out)
}

export function decodeVideo(videoPath: string): Y4mVideo {
  if (!fs.existsSync(videoPath)) {
    throw new JobError(`video file missing: ${videoPath}`)
  }
  if (videoPath.endsWith('.y4m')) {
    return parseY4m(fs.readFileSync(videoPath))
  }
  return decodeWithFfmpeg(videoPath)
}

export function findVideoFile(videosDir: string, videoId: string): string {
  const preferred = path.join(videosDir, `${videoId}.y4m`)
  if (fs.existsSync(preferred)) return preferred
  const hits = fs.readdirSync(videosDir)
    .filter((f) => f.startsWith(`${videoId}.`))
    .sort()
  if (hits.length === 0) {
    throw new JobError(`no video file for ${videoId} in ${videosDir}`)
  }
  return path.join(videosDir, hits[0])
}

export async function extractVideo(
  videoPath: string, rows: ClusterRow[], extractor: FeatureExtractor,
  warn: (msg: string) => void = console.warn,
): Promise<FeatureRecord[]> {
  const video = decodeVideo(videoPath)
  const records: FeatureRecord[] = []
  for (const row of rows) {
    const { index, clamped } = selectFrameIndex(
      row.burstPoint, video.fpsNum, video.fpsDen, video.frames.length)
    if (clamped) {
      warn(`${row.videoId} cluster ${row.clusterIndex}: burst point `
        + `${row.burstPoint}s outside video duration `
        + `${durationSeconds(video).toFixed(2)}s; clamped to frame ${index}`)
    }
    const rgb = frameToRgb(video, index)
    const batch = preprocess(rgb, video.width, video.height, extractor.inputSize)
    const out = extractor.submodel.predict(batch) as tf.Tensor
    const data = await out.data()
    batch.dispose()
    out.dispose()
    if (data.length !== FEATURE_DIM) {
      throw new JobError(`network produced ${data.length} features, expected ${FEATURE_DIM}`)
    }
    records.push({
      video_id: row.videoId,
      cluster_index: row.clusterIndex,
      vector: Array.from(data),
    })
  }
  return records
}

export function writeFeatures(records: FeatureRecord[], outPath: string): void {
  const ordered = [...records].sort((a, b) =>
    a.video_id < b.video_id ? -1 : a.video_id > b.video_id ? 1
      : a.cluster_index - b.cluster_index)
  const lines = ordered.map((r) => JSON.stringify(r))
  fs.writeFileSync(outPath, lines.join('\n') + '\n')
}

export async function extractAll(
  videosDir: string, clustersPath: string, extractor: FeatureExtractor,
  outPath: string, warn: (msg: string) => void = console.warn,
): Promise<number> {
  if (!fs.existsSync(videosDir) || !fs.statSync(videosDir).isDirectory()) {
    throw new JobError(`videos directory missing: ${videosDir}`)
  }
  const byVideo = readClusters(clustersPath)
  if (byVideo.size === 0) throw new JobError('clusters file holds no rows')
  const records: FeatureRecord[] = []
  for (const videoId of [...byVideo.keys()].sort()) {
    const videoPath = findVideoFile(videosDir, videoId)
    records.push(...await extractVideo(videoPath, byVideo.get(videoId)!, extractor, warn))
  }
  writeFeatures(records, outPath)
  return records.length
}
