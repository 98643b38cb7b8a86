import { loadConfig } from "./config";
import { createBrightnessDetector } from "./detector";
import { createDetectorService } from "./server";

async function main(): Promise<void> {
  const config = loadConfig(process.argv.slice(2), process.env);
  const detector = createBrightnessDetector();
  const service = createDetectorService({
    detector,
    threshold: config.threshold,
    maxImageB64: config.maxImageB64,
  });
  const markReady = () => {
    service.markReady();
    console.log(`model ${detector.modelId} ready`);
  };
  const port = await service.listen(config.port, config.host);
  console.log(`detector service listening on http://${config.host}:${port}`);
  if (config.loadDelayMs > 0) {
    setTimeout(markReady, config.loadDelayMs);
  } else {
    markReady();
  }
}

main().catch((err: unknown) => {
  console.error(err instanceof Error ? err.message : String(err));
  process.exit(1);
});
