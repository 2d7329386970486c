import * as fs from 'node:fs'
import * as path from 'node:path'

/** Build a C420 y4m buffer whose pixel pattern depends on the frame index. */
export function makeY4m(opts: {
  width: number
  height: number
  fpsNum?: number
  fpsDen?: number
  frames: number
  pattern?: (frame: number, x: number, y: number) => number
}): Buffer {
  const { width: w, height: h, frames } = opts
  const fpsNum = opts.fpsNum ?? 25
  const fpsDen = opts.fpsDen ?? 1
  const pattern = opts.pattern
    ?? ((f, x, y) => 16 + ((f * 7 + x * 3 + y * 5) % 220))
  const parts: Buffer[] = [
    Buffer.from(`YUV4MPEG2 W${w} H${h} F${fpsNum}:${fpsDen} Ip A1:1 C420jpeg\n`, 'ascii'),
  ]
  const cw = w >> 1
  const ch = h >> 1
  for (let f = 0; f < frames; f++) {
    parts.push(Buffer.from('FRAME\n', 'ascii'))
    const data = Buffer.alloc(w * h + 2 * cw * ch)
    for (let y = 0; y < h; y++) {
      for (let x = 0; x < w; x++) {
        data[y * w + x] = pattern(f, x, y)
      }
    }
    for (let i = 0; i < cw * ch; i++) {
      data[w * h + i] = 100 + (f % 56)       // U
      data[w * h + cw * ch + i] = 160 - (f % 56) // V
    }
    parts.push(data)
  }
  return Buffer.concat(parts)
}

export function writeClusters(
  dir: string, videoId: string, burstPoints: number[],
): string {
  const lines = burstPoints.map((b, j) => JSON.stringify({
    video_id: videoId,
    cluster_index: j,
    burst_point: b,
    text: `tok${j}`,
  }))
  const p = path.join(dir, 'clusters.jsonl')
  fs.writeFileSync(p, lines.join('\n') + '\n')
  return p
}
